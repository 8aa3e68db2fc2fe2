#include "ctrlsum/kmeans.hpp"

#include <algorithm>

#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"
#include "ctrlsum/rng.hpp"

namespace ctrlsum {

std::size_t ClusterModel::nearest(std::span<const double> point) const {
  std::size_t best = 0;
  double best_dist = kernels::squared_distance(centroids.row(0), point);
  for (std::size_t c = 1; c < centroids.rows(); ++c) {
    const double dist = kernels::squared_distance(centroids.row(c), point);
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

double clustering_inertia(const Matrix& points, const Matrix& centroids, std::span<const std::size_t> assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    total += kernels::squared_distance(points.row(i), centroids.row(assignments[i]));
  }
  return total;
}

namespace {

ClusterModel lloyd(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  // Seeds: first k shuffled indices whose coordinates differ from earlier picks,
  // topped up with duplicates only if there are not enough distinct points.
  std::vector<std::size_t> seeds;
  std::vector<std::size_t> duplicates;
  for (std::size_t idx : order) {
    if (seeds.size() == k) break;
    const bool repeat = std::any_of(seeds.begin(), seeds.end(), [&](std::size_t s) {
      return std::equal(points.row(s).begin(), points.row(s).end(), points.row(idx).begin());
    });
    (repeat ? duplicates : seeds).push_back(idx);
  }
  for (std::size_t i = 0; seeds.size() < k; ++i) seeds.push_back(duplicates[i]);

  ClusterModel model;
  model.centroids = Matrix(k, dim);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(seeds[c]).begin(), points.row(seeds[c]).end(), model.centroids.row(c).begin());
  }
  model.assignments.assign(n, k);

  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = model.nearest(points.row(i));
      if (c != model.assignments[i]) {
        model.assignments[i] = c;
        changed = true;
      }
    }
    model.iterations = iter + 1;
    model.inertia_history.push_back(clustering_inertia(points, model.centroids, model.assignments));
    if (!changed) break;

    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::axpy(1.0, points.row(i), sums.row(model.assignments[i]));
      ++counts[model.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) model.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      // Empty cluster: move it onto the point farthest from its own centroid.
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[model.assignments[i]] <= 1) continue;
        const double dist = kernels::squared_distance(points.row(i), model.centroids.row(model.assignments[i]));
        if (dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      if (far_dist < 0.0) continue;
      --counts[model.assignments[far]];
      model.assignments[far] = c;
      counts[c] = 1;
      std::copy(points.row(far).begin(), points.row(far).end(), model.centroids.row(c).begin());
    }
  }
  model.inertia = clustering_inertia(points, model.centroids, model.assignments);
  return model;
}

}  // namespace

ClusterModel kmeans(const Matrix& points, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error("kmeans: k must be >= 1");
  if (points.rows() < k) {
    throw Error("kmeans: " + std::to_string(points.rows()) + " points but k=" + std::to_string(k));
  }
  Rng rng(seed);
  ClusterModel best = lloyd(points, k, rng);
  for (std::size_t r = 1; r < kLloydRestarts; ++r) {
    auto model = lloyd(points, k, rng);
    if (model.inertia < best.inertia) best = std::move(model);
  }
  return best;
}

}  // namespace ctrlsum
