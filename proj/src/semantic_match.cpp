#include "ctrlsum/semantic_match.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <nlohmann/json.hpp>

#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"
#include "ctrlsum/rouge.hpp"

namespace ctrlsum {
namespace {

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) norms[r] = std::sqrt(kernels::dot(m.row(r), m.row(r)));
  return norms;
}

/// Mean over rows of `from` of the best cosine similarity to any row of `to`.
double greedy_direction(const Matrix& from, const std::vector<double>& from_norms, const Matrix& to,
                        const std::vector<double>& to_norms) {
  double total = 0.0;
  for (std::size_t i = 0; i < from.rows(); ++i) {
    if (from_norms[i] == 0.0) continue;
    bool any = false;
    double best = 0.0;
    for (std::size_t j = 0; j < to.rows(); ++j) {
      if (to_norms[j] == 0.0) continue;
      const double sim = kernels::dot(from.row(i), to.row(j)) / (from_norms[i] * to_norms[j]);
      if (!any || sim > best) best = sim;
      any = true;
    }
    if (any) total += best;
  }
  return std::clamp(total / static_cast<double>(from.rows()), 0.0, 1.0);
}

void check_alignment_inputs(const Document& doc) {
  if (!doc.has_gold()) throw Error("document '" + doc.id + "' has no gold summary");
}

template <class ScoreFn>
OracleAlignment greedy_select(const Document& doc, OracleMetric metric, ScoreFn&& score_of) {
  OracleAlignment out;
  out.doc_id = doc.id;
  out.metric = metric;
  std::vector<bool> taken(doc.size(), false);
  for (std::size_t g = 0; g < doc.gold->size(); ++g) {
    std::optional<AlignmentPair> best;
    for (std::size_t s = 0; s < doc.size(); ++s) {
      if (taken[s]) continue;
      const auto score = score_of(g, s);
      if (!score) continue;
      if (!best || score->recall > best->score.recall) best = AlignmentPair{g, s, *score};
    }
    if (best) {
      taken[best->source_index] = true;
      out.pairs.push_back(*best);
      out.selected.push_back(best->source_index);
    }
  }
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

}  // namespace

MatchScore greedy_match_score(const TokenEmbeddings& candidate, const TokenEmbeddings& reference) {
  if (candidate.rows() == 0 || reference.rows() == 0) throw Error("greedy_match_score: empty matrix");
  if (candidate.cols() != reference.cols()) throw Error("greedy_match_score: dimension mismatch");
  const auto cand_norms = row_norms(candidate);
  const auto ref_norms = row_norms(reference);
  MatchScore out;
  out.recall = greedy_direction(reference, ref_norms, candidate, cand_norms);
  out.precision = greedy_direction(candidate, cand_norms, reference, ref_norms);
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

std::string_view metric_name(OracleMetric metric) {
  return metric == OracleMetric::Semantic ? "semantic" : "lexical";
}

OracleMetric parse_metric(std::string_view name) {
  if (name == "semantic") return OracleMetric::Semantic;
  if (name == "lexical") return OracleMetric::Lexical;
  throw Error("unknown oracle metric '" + std::string(name) + "' (expected semantic|lexical)");
}

OracleAlignment build_semantic_oracle(const Document& doc, const DocumentEmbeddings& embeddings,
                                      double threshold) {
  check_alignment_inputs(doc);
  if (embeddings.source.size() != doc.size() || embeddings.gold.size() != doc.gold->size()) {
    throw Error("document '" + doc.id + "': embedding count does not match sentence count");
  }
  return greedy_select(doc, OracleMetric::Semantic,
                       [&](std::size_t g, std::size_t s) -> std::optional<MatchScore> {
                         auto score = greedy_match_score(embeddings.source[s], embeddings.gold[g]);
                         if (score.recall < threshold) return std::nullopt;
                         return score;
                       });
}

OracleAlignment build_lexical_oracle(const Document& doc) {
  check_alignment_inputs(doc);
  return greedy_select(doc, OracleMetric::Lexical,
                       [&](std::size_t g, std::size_t s) -> std::optional<MatchScore> {
                         const auto& cand = doc.sentences[s].tokens;
                         const auto& ref = (*doc.gold)[g].tokens;
                         const auto r1 = rouge_n(cand, ref, 1);
                         MatchScore score{r1.precision, r1.recall, 0.0};
                         if (cand.size() >= 2 && ref.size() >= 2) {
                           const auto r2 = rouge_n(cand, ref, 2);
                           score.precision = 0.5 * (r1.precision + r2.precision);
                           score.recall = 0.5 * (r1.recall + r2.recall);
                         }
                         score.f1 = harmonic_f1(score.precision, score.recall);
                         if (score.recall <= 0.0) return std::nullopt;
                         return score;
                       });
}

std::vector<double> oracle_position_cdf(std::span<const OracleAlignment> alignments, const Corpus& corpus,
                                        std::size_t bins) {
  if (alignments.empty()) throw Error("oracle_position_cdf: no alignments");
  if (bins == 0) throw Error("oracle_position_cdf: bins must be >= 1");
  std::vector<double> counts(bins, 0.0);
  std::size_t total = 0;
  for (const auto& a : alignments) {
    const Document* doc = corpus.find(a.doc_id);
    if (doc == nullptr) throw Error("oracle_position_cdf: unknown document '" + a.doc_id + "'");
    for (std::size_t idx : a.selected) {
      if (idx >= doc->size()) throw Error("oracle_position_cdf: index out of range in '" + a.doc_id + "'");
      counts[idx * bins / doc->size()] += 1.0;
      ++total;
    }
  }
  if (total == 0) throw Error("oracle_position_cdf: no selected sentences");
  double running = 0.0;
  for (double& c : counts) {
    running += c;
    c = running / static_cast<double>(total);
  }
  return counts;
}

void write_oracle_jsonl(std::ostream& out, std::span<const OracleAlignment> alignments,
                        const OracleFileInfo& info) {
  for (const auto& a : alignments) {
    nlohmann::ordered_json record;
    record["id"] = a.doc_id;
    record["selected"] = a.selected;
    auto& pairs = record["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : a.pairs) {
      pairs.push_back({p.gold_index, p.source_index, p.score.precision, p.score.recall, p.score.f1});
    }
    record["metric"] = metric_name(a.metric);
    record["provider"] = info.provider;
    record["threshold"] = a.metric == OracleMetric::Semantic ? info.threshold : 0.0;
    record["gold_order"] = "document";
    record["config_hash"] = info.config_hash;
    out << record.dump() << '\n';
  }
}

std::vector<OracleAlignment> read_oracle_jsonl(std::istream& in) {
  std::vector<OracleAlignment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      OracleAlignment a;
      a.doc_id = record.at("id").get<std::string>();
      a.selected = record.at("selected").get<std::vector<std::size_t>>();
      a.metric = parse_metric(record.at("metric").get<std::string>());
      for (const auto& p : record.at("pairs")) {
        a.pairs.push_back(AlignmentPair{p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(),
                                        MatchScore{p.at(2).get<double>(), p.at(3).get<double>(),
                                                   p.at(4).get<double>()}});
      }
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, "<oracle>", e.what());
    }
  }
  return out;
}

}  // namespace ctrlsum
