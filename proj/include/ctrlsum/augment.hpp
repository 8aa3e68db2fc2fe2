#pragma once

// Sentence-level label augmentation by cluster dominance: within a cluster,
// the aspect held by the largest share of directly labeled sentences is given
// to the cluster's unlabeled sentences.

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ctrlsum/kmeans.hpp"
#include "ctrlsum/subaspects.hpp"

namespace ctrlsum {

struct AugmentationResult {
  std::vector<SentenceAspectLabel> labels;
  /// Dominant aspect per cluster; empty for ties and clusters without direct labels.
  std::vector<std::optional<Aspect>> dominant;
  /// Clusters that held no directly labeled sentence.
  std::vector<std::size_t> clusters_without_direct;
  std::size_t unlabeled_before = 0;
  std::size_t unlabeled_after = 0;

  double unlabeled_reduction() const {
    return unlabeled_before == 0 ? 0.0
                                 : 1.0 - static_cast<double>(unlabeled_after) / static_cast<double>(unlabeled_before);
  }
};

/// `labels[i]` belongs to cluster `model.assignments[i]`. Only labels with
/// origin Direct and a non-empty aspect set count toward dominance; direct
/// labels are never modified. Throws Error if the sizes disagree.
AugmentationResult augment_labels(const ClusterModel& model, std::span<const SentenceAspectLabel> labels);

/// JSONL: {"id", "index", "labels": [aspect names], "origin", "config_hash"}.
void write_sentence_labels_jsonl(std::ostream& out, std::span<const SentenceAspectLabel> labels,
                                 std::string_view config_hash);
std::vector<SentenceAspectLabel> read_sentence_labels_jsonl(std::istream& in);

}  // namespace ctrlsum
