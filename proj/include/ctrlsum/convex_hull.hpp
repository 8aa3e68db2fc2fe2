#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ctrlsum/matrix.hpp"

namespace ctrlsum::geometry {

struct Projection {
  /// n x dims coordinates on the leading principal axes.
  Matrix points;
  /// Variance captured by each returned axis, descending.
  std::vector<double> variances;
};

/// Centered PCA onto the `dims` leading principal axes (fewer if the data has
/// fewer columns). Works through the n x n Gram matrix when n < columns.
Projection principal_components(const Matrix& data, std::size_t dims);

/// Indices of the points that are vertices of the convex hull, sorted.
///
/// QuickHull in the dimension of `points` (rows are points). Points lying on a
/// facet, edge, or inside are not vertices. Returns nullopt when the points do
/// not span the full dimension (no initial simplex exists).
std::optional<std::vector<std::size_t>> quickhull_vertices(const Matrix& points);

}  // namespace ctrlsum::geometry
