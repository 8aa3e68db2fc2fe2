#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctrlsum/matrix.hpp"

namespace ctrlsum {

inline constexpr std::size_t kDefaultClusters = 5;
inline constexpr std::size_t kMaxLloydIterations = 300;
inline constexpr std::size_t kLloydRestarts = 10;

struct ClusterModel {
  Matrix centroids;                     // k x dim
  std::vector<std::size_t> assignments; // one per input point
  double inertia = 0.0;                 // sum of squared distances to own centroid
  std::size_t iterations = 0;
  /// Inertia after each assignment step.
  std::vector<double> inertia_history;

  std::size_t k() const noexcept { return centroids.rows(); }
  /// Index of the nearest centroid (ties to the lower index).
  std::size_t nearest(std::span<const double> point) const;
};

/// Lloyd's algorithm. Initial centroids are k points at distinct indices drawn
/// by seeded sampling without replacement, preferring points with distinct
/// coordinates. Runs until assignments stop changing or 300 iterations. A
/// cluster that empties is re-seeded at the point farthest from its current
/// centroid. The best of 10 such runs (lowest inertia, earliest on ties) is
/// kept, each run drawing its seeds from one seeded stream. Throws Error when
/// there are fewer points than k.
ClusterModel kmeans(const Matrix& points, std::size_t k, std::uint64_t seed);

double clustering_inertia(const Matrix& points, const Matrix& centroids, std::span<const std::size_t> assignments);

}  // namespace ctrlsum
