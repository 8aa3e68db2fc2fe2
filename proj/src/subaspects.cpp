#include "ctrlsum/subaspects.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "ctrlsum/convex_hull.hpp"
#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"

namespace ctrlsum {
namespace {

Matrix to_matrix(std::span<const SentenceVector> vectors) {
  Matrix m;
  for (const auto& v : vectors) m.push_row(v);
  return m;
}

IndexSet all_indices(std::size_t n) {
  IndexSet out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

IndexSet axis_extremes(const Matrix& points, std::size_t axes) {
  IndexSet out;
  for (std::size_t k = 0; k < axes; ++k) {
    std::size_t lo = 0;
    std::size_t hi = 0;
    for (std::size_t i = 1; i < points.rows(); ++i) {
      if (points(i, k) < points(lo, k)) lo = i;
      if (points(i, k) > points(hi, k)) hi = i;
    }
    out.push_back(lo);
    out.push_back(hi);
  }
  if (out.empty()) out.push_back(0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::string_view aspect_name(Aspect aspect) {
  switch (aspect) {
    case Aspect::Importance: return "importance";
    case Aspect::Diversity: return "diversity";
    case Aspect::Position: return "position";
  }
  return "importance";
}

Aspect parse_aspect(std::string_view name) {
  for (Aspect a : kAspects) {
    if (aspect_name(a) == name) return a;
  }
  throw Error("unknown aspect '" + std::string(name) + "'");
}

AspectFlags AspectFlags::from_value(unsigned value) {
  if (value > 7) throw Error("control code value out of range: " + std::to_string(value));
  return AspectFlags((value & 4U) != 0, (value & 2U) != 0, (value & 1U) != 0);
}

AspectFlags AspectFlags::parse(std::string_view text) {
  std::string digits;
  for (char c : text) {
    if (c == '0' || c == '1') {
      digits.push_back(c);
    } else if (c != '[' && c != ']' && c != ',' && c != ' ') {
      digits.clear();
      break;
    }
  }
  if (digits.size() != 3) {
    throw Error("bad control code '" + std::string(text) + "' (expected three bits, e.g. 101)");
  }
  return AspectFlags(digits[0] == '1', digits[1] == '1', digits[2] == '1');
}

std::string AspectFlags::str() const {
  std::string out;
  for (Aspect a : kAspects) out.push_back(get(a) ? '1' : '0');
  return out;
}

std::array<double, 3> AspectFlags::as_vector() const {
  return {get(Aspect::Importance) ? 1.0 : 0.0, get(Aspect::Diversity) ? 1.0 : 0.0,
          get(Aspect::Position) ? 1.0 : 0.0};
}

const IndexSet& SubAspectSet::get(Aspect a) const {
  switch (a) {
    case Aspect::Importance: return importance;
    case Aspect::Diversity: return diversity;
    case Aspect::Position: return position;
  }
  return importance;
}

IndexSet& SubAspectSet::get(Aspect a) { return const_cast<IndexSet&>(static_cast<const SubAspectSet&>(*this).get(a)); }

AspectFlags SubAspectSet::membership(std::size_t index) const {
  AspectFlags flags;
  for (Aspect a : kAspects) {
    const auto& set = get(a);
    if (std::binary_search(set.begin(), set.end(), index)) flags.set(a);
  }
  return flags;
}

std::vector<double> importance_scores(std::span<const SentenceVector> vectors) {
  const std::size_t n = vectors.size();
  if (n < 2) throw Error("importance_subset: need at least 2 sentences");
  const std::size_t d = vectors.front().size();
  std::vector<Vector> centered(n);
  std::vector<double> norms(n);
  std::vector<bool> constant(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (vectors[i].size() != d) throw Error("importance_subset: inconsistent dimensions");
    double mean = 0.0;
    double magnitude = 0.0;
    for (double v : vectors[i]) {
      mean += v;
      magnitude = std::max(magnitude, std::abs(v));
    }
    mean /= static_cast<double>(d);
    centered[i].resize(d);
    for (std::size_t j = 0; j < d; ++j) centered[i][j] = vectors[i][j] - mean;
    norms[i] = std::sqrt(kernels::dot(centered[i], centered[i]));
    constant[i] = norms[i] <= 1e-12 * magnitude * std::sqrt(static_cast<double>(d));
  }
  std::vector<double> scores(n, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (constant[i]) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || constant[j]) continue;
      total += kernels::dot(centered[i], centered[j]) / (norms[i] * norms[j]);
    }
    scores[i] = total / static_cast<double>(n - 1);
  }
  return scores;
}

constexpr double kScoreGrid = 1e12;

IndexSet importance_subset(std::span<const SentenceVector> vectors, std::size_t k) {
  if (vectors.size() < 2) throw Error("importance_subset: need at least 2 sentences");
  if (k < 1 || k > vectors.size()) {
    throw Error("importance_subset: k=" + std::to_string(k) + " out of range 1.." + std::to_string(vectors.size()));
  }
  // Scores equal up to rounding tie; ranking uses a 1e-12 grid.
  auto scores = importance_scores(vectors);
  for (double& s : scores) s = std::round(s * kScoreGrid);
  IndexSet order = all_indices(vectors.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

IndexSet diversity_subset(std::span<const SentenceVector> vectors, std::size_t projection_dim) {
  const std::size_t n = vectors.size();
  if (n < 2) throw Error("diversity_subset: need at least 2 sentences");
  if (projection_dim < 1) throw Error("diversity_subset: projection_dim must be >= 1");
  if (n < projection_dim + 2) return all_indices(n);

  const auto projection = geometry::principal_components(to_matrix(vectors), projection_dim);
  const double top = projection.variances.empty() ? 0.0 : projection.variances.front();
  std::size_t effective = 0;
  for (double v : projection.variances) {
    if (top > 0.0 && v > 1e-12 * top) ++effective;
  }
  if (effective < projection_dim) return axis_extremes(projection.points, effective);
  if (auto vertices = geometry::quickhull_vertices(projection.points)) return *vertices;
  return axis_extremes(projection.points, effective);
}

IndexSet position_subset(std::size_t n_sentences) {
  if (n_sentences == 0) throw Error("position_subset: document has no sentences");
  return all_indices(std::min<std::size_t>(4, n_sentences));
}

ControlCode map_summary(const IndexSet& unsorted, const SubAspectSet& aspects) {
  if (unsorted.empty()) throw Error("map_summary: empty selection");
  IndexSet selected = unsorted;
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  ControlCode code;
  for (Aspect a : kAspects) {
    const std::size_t hits = intersection_size(selected, aspects.get(a));
    code.set(a, hits >= 2 || (selected.size() <= 2 && hits >= 1));
  }
  return code;
}

SubAspectSet compute_subaspects(std::span<const SentenceVector> vectors, std::size_t importance_k,
                                std::size_t projection_dim) {
  const std::size_t n = vectors.size();
  SubAspectSet out;
  out.position = position_subset(n);
  if (n == 1) {
    out.importance = {0};
    out.diversity = {0};
    return out;
  }
  out.importance = importance_subset(vectors, std::clamp<std::size_t>(importance_k, 1, n));
  out.diversity = diversity_subset(vectors, projection_dim);
  return out;
}

CoverageReport corpus_coverage(std::span<const ControlCode> codes) {
  if (codes.empty()) throw Error("corpus_coverage: no codes");
  std::array<std::size_t, 8> counts{};
  for (ControlCode c : codes) ++counts[c.value()];
  CoverageReport report;
  report.total = codes.size();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    report.fractions[i] = static_cast<double>(counts[i]) / static_cast<double>(codes.size());
  }
  return report;
}

std::string_view origin_name(LabelOrigin origin) {
  return origin == LabelOrigin::Direct ? "direct" : "cluster-augmented";
}

LabelOrigin parse_origin(std::string_view name) {
  if (name == "direct") return LabelOrigin::Direct;
  if (name == "cluster-augmented") return LabelOrigin::ClusterAugmented;
  throw Error("unknown label origin '" + std::string(name) + "'");
}

void write_labels_jsonl(std::ostream& out, std::span<const DocumentLabels> labels, std::string_view config_hash) {
  for (const auto& l : labels) {
    nlohmann::ordered_json record;
    record["id"] = l.doc_id;
    record["importance"] = l.aspects.importance;
    record["diversity"] = l.aspects.diversity;
    record["position"] = l.aspects.position;
    const auto bits = l.code.as_vector();
    record["code"] = {static_cast<int>(bits[0]), static_cast<int>(bits[1]), static_cast<int>(bits[2])};
    record["k"] = l.importance_k;
    record["config_hash"] = config_hash;
    out << record.dump() << '\n';
  }
}

std::vector<DocumentLabels> read_labels_jsonl(std::istream& in) {
  std::vector<DocumentLabels> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      DocumentLabels l;
      l.doc_id = record.at("id").get<std::string>();
      l.aspects.importance = record.at("importance").get<IndexSet>();
      l.aspects.diversity = record.at("diversity").get<IndexSet>();
      l.aspects.position = record.at("position").get<IndexSet>();
      const auto bits = record.at("code").get<std::vector<int>>();
      if (bits.size() != 3) throw SchemaError(line_no, "code", "expected three bits");
      l.code = ControlCode(bits[0] != 0, bits[1] != 0, bits[2] != 0);
      l.importance_k = record.value("k", std::size_t{0});
      out.push_back(std::move(l));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, "<labels>", e.what());
    }
  }
  return out;
}

}  // namespace ctrlsum
