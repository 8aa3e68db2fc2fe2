#include "ctrlsum/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>

#include "ctrlsum/error.hpp"
#include "ctrlsum/rng.hpp"

namespace ctrlsum {
namespace {

std::vector<std::string> joined_tokens(const std::vector<Sentence>& sentences, std::span<const std::size_t> which) {
  std::vector<std::string> out;
  for (std::size_t i : which) {
    out.insert(out.end(), sentences[i].tokens.begin(), sentences[i].tokens.end());
  }
  return out;
}

std::vector<std::string> all_tokens(const std::vector<Sentence>& sentences) {
  std::vector<std::string> out;
  for (const auto& s : sentences) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

void accumulate(RougeComponent& into, const RougeComponent& c, double w) {
  into.precision += w * c.precision;
  into.recall += w * c.recall;
  into.f1 += w * c.f1;
}

RougeComponent minus(const RougeComponent& a, const RougeComponent& b) {
  return {a.precision - b.precision, a.recall - b.recall, a.f1 - b.f1};
}

nlohmann::json component_json(const RougeComponent& c) {
  return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
}

nlohmann::json rouge_json(const RougeScore& s) {
  return {{"rouge1", component_json(s.rouge1)}, {"rouge2", component_json(s.rouge2)}};
}

std::string code_label(const std::optional<ControlCode>& code) { return code ? code->str() : "-"; }

std::string fixed(double v, int precision = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

void check_gold(const Corpus& corpus) {
  std::vector<std::string> missing;
  for (const auto& d : corpus.documents) {
    if (!d.has_gold()) missing.push_back(d.id);
  }
  if (missing.empty()) return;
  std::string msg = "documents without gold summaries:";
  for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
  if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
  throw Error(msg);
}

}  // namespace

CorpusVectors corpus_sentence_vectors(std::span<const DocumentEmbeddings> embeddings) {
  CorpusVectors out;
  out.reserve(embeddings.size());
  for (const auto& e : embeddings) out.push_back(e.source_vectors());
  return out;
}

EvaluationReport evaluate_system(std::span<const SystemSummary> summaries, const Corpus& corpus, std::string system,
                                 std::optional<ControlCode> code, std::size_t bins) {
  if (summaries.empty()) throw Error("evaluate_system: no summaries");
  EvaluationReport report;
  report.system = std::move(system);
  report.code = code;
  std::vector<std::string> missing_gold;
  for (const auto& s : summaries) {
    const Document* doc = corpus.find(s.doc_id);
    if (doc == nullptr) throw Error("evaluate_system: unknown document '" + s.doc_id + "'");
    if (!doc->has_gold()) {
      missing_gold.push_back(s.doc_id);
      continue;
    }
    for (std::size_t i : s.selected) {
      if (i >= doc->size()) throw Error("evaluate_system: sentence index out of range in '" + s.doc_id + "'");
    }
    std::vector<std::size_t> ordered = s.selected;
    std::sort(ordered.begin(), ordered.end());
    const auto candidate = joined_tokens(doc->sentences, ordered);
    const auto reference = all_tokens(*doc->gold);
    report.per_document.push_back({s.doc_id, {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2)}});
  }
  if (!missing_gold.empty()) {
    std::string msg = "evaluate_system: missing gold for";
    for (const auto& id : missing_gold) msg += " " + id;
    throw Error(msg);
  }
  std::sort(report.per_document.begin(), report.per_document.end(),
            [](const DocumentScore& a, const DocumentScore& b) { return a.doc_id < b.doc_id; });
  const double w = 1.0 / static_cast<double>(report.per_document.size());
  for (const auto& d : report.per_document) {
    accumulate(report.mean.rouge1, d.rouge.rouge1, w);
    accumulate(report.mean.rouge2, d.rouge.rouge2, w);
  }
  report.samples = report.per_document.size();
  report.histogram = position_histogram(summaries, corpus, bins);
  return report;
}

std::vector<double> position_histogram(std::span<const SystemSummary> summaries, const Corpus& corpus,
                                       std::size_t bins) {
  if (bins == 0) throw Error("position_histogram: bins must be >= 1");
  std::vector<double> hist(bins, 0.0);
  std::size_t total = 0;
  for (const auto& s : summaries) {
    const Document* doc = corpus.find(s.doc_id);
    if (doc == nullptr) throw Error("position_histogram: unknown document '" + s.doc_id + "'");
    for (std::size_t i : s.selected) {
      if (i >= doc->size()) throw Error("position_histogram: sentence index out of range in '" + s.doc_id + "'");
      hist[i * bins / doc->size()] += 1.0;
      ++total;
    }
  }
  if (total > 0) {
    for (double& h : hist) h /= static_cast<double>(total);
  }
  return hist;
}

AspectMappingCounts aspect_mapping_report(std::span<const SystemSummary> summaries,
                                          std::span<const DocumentLabels> aspect_sets) {
  std::map<std::string, const DocumentLabels*> by_id;
  for (const auto& l : aspect_sets) by_id[l.doc_id] = &l;
  AspectMappingCounts counts;
  for (const auto& s : summaries) {
    const auto it = by_id.find(s.doc_id);
    if (it == by_id.end()) throw Error("aspect_mapping_report: no aspect sets for '" + s.doc_id + "'");
    for (Aspect a : kAspects) {
      const auto& set = it->second->aspects.get(a);
      const auto hits = static_cast<std::size_t>(std::count_if(s.selected.begin(), s.selected.end(), [&](std::size_t i) {
        return std::binary_search(set.begin(), set.end(), i);
      }));
      const auto slot = static_cast<std::size_t>(a);
      if (hits >= 1) ++counts.at_least_one[slot];
      if (hits >= 2) ++counts.at_least_two[slot];
    }
    ++counts.total;
  }
  return counts;
}

SentenceScorer selector_scorer(const SelectorParams& params) {
  return [&params](std::span<const SentenceVector> sentences, ControlCode code) {
    return score_sentences(params, sentences, code);
  };
}

std::vector<SystemSummary> summarize_corpus(const SentenceScorer& scorer, const Corpus& corpus,
                                            const CorpusVectors& vectors, ControlCode code,
                                            const ExtractionOptions& options) {
  if (vectors.size() != corpus.size()) throw Error("summarize_corpus: sentence vectors do not cover the corpus");
  std::vector<SystemSummary> out;
  out.reserve(corpus.size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus.documents[d];
    const auto scores = scorer(vectors[d], code);
    out.push_back({doc.id, extract_summary(scores, doc, options.top_k, options.trigram_blocking)});
  }
  return out;
}

std::uint64_t document_shuffle_seed(std::uint64_t seed, std::string_view doc_id) {
  std::uint64_t state = seed ^ fnv1a64(doc_id);
  return splitmix64(state);
}

ShuffleReport shuffle_experiment(const SentenceScorer& scorer, const Corpus& corpus, const CorpusVectors& vectors,
                                 std::span<const ControlCode> codes, std::uint64_t seed,
                                 const ExtractionOptions& options) {
  if (codes.empty()) throw Error("shuffle_experiment: no control codes");
  if (vectors.size() != corpus.size()) throw Error("shuffle_experiment: sentence vectors do not cover the corpus");
  check_gold(corpus);

  Corpus shuffled;
  shuffled.split = corpus.split;
  CorpusVectors shuffled_vectors;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus.documents[d];
    const std::uint64_t doc_seed = document_shuffle_seed(seed, doc.id);
    const auto perm = shuffle_permutation(doc.size(), doc_seed);
    shuffled.documents.push_back(shuffle_document(doc, doc_seed));
    std::vector<SentenceVector> v;
    v.reserve(perm.size());
    for (std::size_t old : perm) v.push_back(vectors[d].at(old));
    shuffled_vectors.push_back(std::move(v));
  }

  ShuffleReport report;
  report.seed = seed;
  for (ControlCode code : codes) {
    ShuffleRow row;
    row.code = code;
    row.in_order = evaluate_system(summarize_corpus(scorer, corpus, vectors, code, options), corpus, "in-order", code);
    row.shuffled =
        evaluate_system(summarize_corpus(scorer, shuffled, shuffled_vectors, code, options), shuffled, "shuffled", code);
    row.delta.rouge1 = minus(row.shuffled.mean.rouge1, row.in_order.mean.rouge1);
    row.delta.rouge2 = minus(row.shuffled.mean.rouge2, row.in_order.mean.rouge2);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<EvaluationReport> cross_domain_inference(const SentenceScorer& scorer, const Corpus& corpus,
                                                     const CorpusVectors& vectors, std::span<const ControlCode> codes,
                                                     const ExtractionOptions& options) {
  if (codes.empty()) throw Error("cross_domain_inference: no control codes");
  check_gold(corpus);
  std::vector<EvaluationReport> out;
  for (ControlCode code : codes) {
    out.push_back(evaluate_system(summarize_corpus(scorer, corpus, vectors, code, options), corpus, "cross-domain", code));
  }
  return out;
}

std::string report_preamble() {
  return "# ROUGE over lowercased word tokens with punctuation kept as separate tokens; "
         "no stemming, no stopword removal; single reference per document.\n";
}

nlohmann::json report_json(const EvaluationReport& report) {
  nlohmann::json j = {{"system", report.system},
                      {"code", code_label(report.code)},
                      {"samples", report.samples},
                      {"mean", rouge_json(report.mean)},
                      {"histogram", report.histogram},
                      {"tokenization", "lowercase word tokens, punctuation split, no stemming, no stopwords"}};
  if (report.mapping) {
    nlohmann::json m = nlohmann::json::object();
    for (Aspect a : kAspects) {
      const auto slot = static_cast<std::size_t>(a);
      m[std::string(aspect_name(a))] = {{"at_least_one", report.mapping->at_least_one[slot]},
                                        {"at_least_two", report.mapping->at_least_two[slot]}};
    }
    m["total"] = report.mapping->total;
    j["aspect_mapping"] = std::move(m);
  }
  return j;
}

nlohmann::json shuffle_json(const ShuffleReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"code", r.code.str()},
                    {"in_order", rouge_json(r.in_order.mean)},
                    {"shuffled", rouge_json(r.shuffled.mean)},
                    {"delta", rouge_json(r.delta)},
                    {"samples", r.in_order.samples}});
  }
  return {{"seed", report.seed}, {"rows", std::move(rows)}};
}

void write_report_text(std::ostream& out, std::span<const EvaluationReport> reports) {
  out << report_preamble();
  out << std::left << std::setw(16) << "system" << std::setw(6) << "code" << std::right << std::setw(7) << "n";
  for (const char* h : {"R1-P", "R1-R", "R1-F", "R2-P", "R2-R", "R2-F"}) out << std::setw(9) << h;
  out << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(16) << r.system << std::setw(6) << code_label(r.code) << std::right << std::setw(7)
        << r.samples;
    for (double v : {r.mean.rouge1.precision, r.mean.rouge1.recall, r.mean.rouge1.f1, r.mean.rouge2.precision,
                     r.mean.rouge2.recall, r.mean.rouge2.f1}) {
      out << std::setw(9) << fixed(100.0 * v, 2);
    }
    out << '\n';
  }
}

void write_shuffle_text(std::ostream& out, const ShuffleReport& report) {
  out << report_preamble();
  out << "# shuffle seed " << report.seed << "; delta = shuffled - in-order (F1 points)\n";
  out << std::left << std::setw(6) << "code" << std::right;
  for (const char* h : {"R1-F", "R1-F*", "dR1", "R2-F", "R2-F*", "dR2"}) out << std::setw(9) << h;
  out << '\n';
  for (const auto& r : report.rows) {
    out << std::left << std::setw(6) << r.code.str() << std::right;
    for (double v : {r.in_order.mean.rouge1.f1, r.shuffled.mean.rouge1.f1, r.delta.rouge1.f1, r.in_order.mean.rouge2.f1,
                     r.shuffled.mean.rouge2.f1, r.delta.rouge2.f1}) {
      out << std::setw(9) << fixed(100.0 * v, 2);
    }
    out << '\n';
  }
  out << "# * = shuffled input\n";
}

void write_per_document_csv(std::ostream& out, const EvaluationReport& report) {
  out << "doc_id,r1_precision,r1_recall,r1_f1,r2_precision,r2_recall,r2_f1\n";
  for (const auto& d : report.per_document) {
    out << d.doc_id;
    for (double v : {d.rouge.rouge1.precision, d.rouge.rouge1.recall, d.rouge.rouge1.f1, d.rouge.rouge2.precision,
                     d.rouge.rouge2.recall, d.rouge.rouge2.f1}) {
      out << ',' << fixed(v, 6);
    }
    out << '\n';
  }
}

void write_histogram_csv(std::ostream& out, std::span<const EvaluationReport> reports) {
  std::size_t bins = 0;
  for (const auto& r : reports) bins = std::max(bins, r.histogram.size());
  out << "system,code";
  for (std::size_t b = 0; b < bins; ++b) out << ",bin_" << b;
  out << '\n';
  for (const auto& r : reports) {
    out << r.system << ',' << code_label(r.code);
    for (double v : r.histogram) out << ',' << fixed(v, 6);
    out << '\n';
  }
}

void write_summaries_jsonl(std::ostream& out, std::span<const SystemSummary> summaries, ControlCode code,
                           std::string_view config_hash) {
  for (const auto& s : summaries) {
    nlohmann::ordered_json j;
    j["id"] = s.doc_id;
    j["selected"] = s.selected;
    j["code"] = code.str();
    j["config_hash"] = config_hash;
    out << j.dump() << '\n';
  }
}

std::vector<SystemSummary> read_summaries_jsonl(std::istream& in) {
  std::vector<SystemSummary> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("selected").get<std::vector<std::size_t>>()});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, "summary", e.what());
    }
  }
  return out;
}

}  // namespace ctrlsum
