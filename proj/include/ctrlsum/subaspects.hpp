#pragma once

// Sub-aspect sentence subsets (importance, diversity, position) and the
// 3-bit multi-hot control codes derived from them.

#include <array>
#include <bit>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctrlsum/embeddings.hpp"

namespace ctrlsum {

enum class Aspect : std::uint8_t { Importance = 0, Diversity = 1, Position = 2 };

inline constexpr std::array<Aspect, 3> kAspects{Aspect::Importance, Aspect::Diversity, Aspect::Position};

std::string_view aspect_name(Aspect aspect);
Aspect parse_aspect(std::string_view name);

/// Three flags in the order [importance, diversity, position]. Used both as a
/// summary-level control code and as a sentence's set of aspect labels.
class AspectFlags {
 public:
  constexpr AspectFlags() = default;
  constexpr AspectFlags(bool importance, bool diversity, bool position)
      : bits_(static_cast<std::uint8_t>((importance ? 4 : 0) | (diversity ? 2 : 0) | (position ? 1 : 0))) {}

  /// value = 4 * importance + 2 * diversity + position, so "101" is 5.
  static AspectFlags from_value(unsigned value);
  /// "101", "[1,0,1]" or "1,0,1".
  static AspectFlags parse(std::string_view text);

  bool get(Aspect a) const { return (bits_ >> shift(a)) & 1U; }
  void set(Aspect a, bool on = true) {
    if (on) {
      bits_ = static_cast<std::uint8_t>(bits_ | (1U << shift(a)));
    } else {
      bits_ = static_cast<std::uint8_t>(bits_ & ~(1U << shift(a)));
    }
  }
  unsigned value() const noexcept { return bits_; }
  bool any() const noexcept { return bits_ != 0; }
  std::size_t count() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }

  /// "101"
  std::string str() const;
  /// {importance, diversity, position} as 0.0 / 1.0.
  std::array<double, 3> as_vector() const;

  friend constexpr bool operator==(AspectFlags, AspectFlags) = default;

 private:
  static unsigned shift(Aspect a) { return 2U - static_cast<unsigned>(a); }
  std::uint8_t bits_ = 0;
};

using ControlCode = AspectFlags;

/// Sorted, duplicate-free sentence indices.
using IndexSet = std::vector<std::size_t>;

struct SubAspectSet {
  IndexSet importance;
  IndexSet diversity;
  IndexSet position;

  const IndexSet& get(Aspect a) const;
  IndexSet& get(Aspect a);
  /// Aspects whose subset contains `index`.
  AspectFlags membership(std::size_t index) const;

  friend bool operator==(const SubAspectSet&, const SubAspectSet&) = default;
};

/// Mean Pearson correlation of each sentence vector with every other one.
/// A constant (zero-variance) vector scores -1; a constant partner contributes
/// correlation 0.
std::vector<double> importance_scores(std::span<const SentenceVector> vectors);

/// The k highest-scoring sentences. Scores are compared on a 1e-12 grid and
/// ties go to the lower index. Needs n >= 2 and 1 <= k <= n.
IndexSet importance_subset(std::span<const SentenceVector> vectors, std::size_t k);

inline constexpr std::size_t kDefaultProjectionDim = 4;
inline constexpr std::size_t kDefaultImportanceK = 4;

/// Convex-hull vertices after centered PCA to `projection_dim` axes.
/// With fewer than projection_dim + 2 sentences every index is returned. When
/// the projected points do not span projection_dim dimensions, the extreme
/// points (min and max) along each non-degenerate principal axis are returned,
/// or {0} if all points coincide. Needs n >= 2.
IndexSet diversity_subset(std::span<const SentenceVector> vectors,
                          std::size_t projection_dim = kDefaultProjectionDim);

/// {0, ..., min(3, n - 1)}
IndexSet position_subset(std::size_t n_sentences);

/// Bit a is set iff |selected ∩ a| >= 2, or |selected| <= 2 and
/// |selected ∩ a| >= 1. All zeros means the summary is unmapped.
ControlCode map_summary(const IndexSet& selected, const SubAspectSet& aspects);

/// All three subsets for one document. Single-sentence documents get {0}
/// for importance and diversity.
SubAspectSet compute_subaspects(std::span<const SentenceVector> vectors, std::size_t importance_k,
                                std::size_t projection_dim = kDefaultProjectionDim);

struct CoverageReport {
  /// Indexed by ControlCode::value(); entry 0 is the unmapped fraction.
  std::array<double, 8> fractions{};
  std::size_t total = 0;

  double unmapped() const { return fractions[0]; }
  double fraction(ControlCode code) const { return fractions[code.value()]; }
};

CoverageReport corpus_coverage(std::span<const ControlCode> codes);

enum class LabelOrigin { Direct, ClusterAugmented };

std::string_view origin_name(LabelOrigin origin);
LabelOrigin parse_origin(std::string_view name);

struct SentenceAspectLabel {
  std::string doc_id;
  std::size_t index = 0;
  AspectFlags labels;
  LabelOrigin origin = LabelOrigin::Direct;

  friend bool operator==(const SentenceAspectLabel&, const SentenceAspectLabel&) = default;
};

struct DocumentLabels {
  std::string doc_id;
  SubAspectSet aspects;
  ControlCode code;
  std::size_t importance_k = 0;
};

/// JSONL: {"id", "importance", "diversity", "position", "code": [b, b, b], "k", "config_hash"}.
void write_labels_jsonl(std::ostream& out, std::span<const DocumentLabels> labels, std::string_view config_hash);
std::vector<DocumentLabels> read_labels_jsonl(std::istream& in);

}  // namespace ctrlsum
