#include "ctrlsum/augment.hpp"

#include <array>
#include <nlohmann/json.hpp>

#include "ctrlsum/error.hpp"

namespace ctrlsum {

AugmentationResult augment_labels(const ClusterModel& model, std::span<const SentenceAspectLabel> labels) {
  if (model.assignments.size() != labels.size()) {
    throw Error("augment_labels: " + std::to_string(labels.size()) + " labels but " +
                std::to_string(model.assignments.size()) + " cluster assignments");
  }
  const std::size_t k = model.k();
  std::vector<std::array<std::size_t, 3>> counts(k, {0, 0, 0});
  std::vector<std::size_t> direct(k, 0);
  AugmentationResult result;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = model.assignments[i];
    if (c >= k) throw Error("augment_labels: cluster id out of range");
    const auto& l = labels[i];
    if (!l.labels.any()) ++result.unlabeled_before;
    if (l.origin != LabelOrigin::Direct || !l.labels.any()) continue;
    ++direct[c];
    for (Aspect a : kAspects) {
      if (l.labels.get(a)) ++counts[c][static_cast<std::size_t>(a)];
    }
  }

  result.dominant.assign(k, std::nullopt);
  for (std::size_t c = 0; c < k; ++c) {
    if (direct[c] == 0) {
      result.clusters_without_direct.push_back(c);
      continue;
    }
    std::size_t best = 0;
    bool tie = false;
    for (std::size_t a = 1; a < 3; ++a) {
      if (counts[c][a] > counts[c][best]) {
        best = a;
        tie = false;
      } else if (counts[c][a] == counts[c][best]) {
        tie = true;
      }
    }
    if (!tie) result.dominant[c] = static_cast<Aspect>(best);
  }

  result.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < result.labels.size(); ++i) {
    auto& l = result.labels[i];
    if (l.labels.any()) continue;
    if (const auto aspect = result.dominant[model.assignments[i]]) {
      l.labels.set(*aspect);
      l.origin = LabelOrigin::ClusterAugmented;
    } else {
      ++result.unlabeled_after;
    }
  }
  return result;
}

void write_sentence_labels_jsonl(std::ostream& out, std::span<const SentenceAspectLabel> labels,
                                 std::string_view config_hash) {
  for (const auto& l : labels) {
    nlohmann::ordered_json record;
    record["id"] = l.doc_id;
    record["index"] = l.index;
    auto& names = record["labels"] = nlohmann::ordered_json::array();
    for (Aspect a : kAspects) {
      if (l.labels.get(a)) names.push_back(aspect_name(a));
    }
    record["origin"] = origin_name(l.origin);
    record["config_hash"] = config_hash;
    out << record.dump() << '\n';
  }
}

std::vector<SentenceAspectLabel> read_sentence_labels_jsonl(std::istream& in) {
  std::vector<SentenceAspectLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      SentenceAspectLabel l;
      l.doc_id = record.at("id").get<std::string>();
      l.index = record.at("index").get<std::size_t>();
      for (const auto& name : record.at("labels")) l.labels.set(parse_aspect(name.get<std::string>()));
      l.origin = parse_origin(record.at("origin").get<std::string>());
      out.push_back(std::move(l));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, "<sentence-labels>", e.what());
    }
  }
  return out;
}

}  // namespace ctrlsum
