#include "ctrlsum/convex_hull.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "ctrlsum/error.hpp"
#include "ctrlsum/kernels.hpp"

namespace ctrlsum::geometry {

Projection principal_components(const Matrix& data, std::size_t dims) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  const auto d = static_cast<Eigen::Index>(data.cols());
  if (n == 0) throw Error("principal_components: no points");
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = data(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  x.rowwise() -= x.colwise().mean();

  const auto keep = static_cast<Eigen::Index>(std::min<std::size_t>(dims, static_cast<std::size_t>(std::min(n, d))));
  Projection out;
  out.points = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(keep));
  const double denom = static_cast<double>(std::max<Eigen::Index>(n - 1, 1));

  if (n < d) {
    // Eigenvectors u of X X^T give scores sqrt(lambda) * u.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x * x.transpose());
    const auto& values = solver.eigenvalues();
    const auto& vectors = solver.eigenvectors();
    for (Eigen::Index k = 0; k < keep; ++k) {
      const Eigen::Index col = n - 1 - k;
      const double lambda = std::max(values(col), 0.0);
      out.variances.push_back(lambda / denom);
      const double scale = std::sqrt(lambda);
      for (Eigen::Index i = 0; i < n; ++i) {
        out.points(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) = scale * vectors(i, col);
      }
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x.transpose() * x);
    const auto& values = solver.eigenvalues();
    const Eigen::MatrixXd scores = x * solver.eigenvectors();
    for (Eigen::Index k = 0; k < keep; ++k) {
      const Eigen::Index col = d - 1 - k;
      out.variances.push_back(std::max(values(col), 0.0) / denom);
      for (Eigen::Index i = 0; i < n; ++i) {
        out.points(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) = scores(i, col);
      }
    }
  }
  return out;
}

namespace {

struct Facet {
  std::vector<std::size_t> vertices;  // sorted
  Vector normal;
  double offset = 0.0;
  std::vector<std::size_t> outside;
  bool alive = true;
};

class QuickHull {
 public:
  explicit QuickHull(const Matrix& points) : points_(points), dim_(points.cols()) {
    double scale = 0.0;
    for (double v : points.data()) scale = std::max(scale, std::abs(v));
    eps_ = 1e-10 * std::max(scale, 1e-300);
  }

  std::optional<std::vector<std::size_t>> run() {
    if (dim_ == 0 || points_.rows() < dim_ + 1) return std::nullopt;
    auto simplex = initial_simplex();
    if (!simplex) return std::nullopt;

    interior_.assign(dim_, 0.0);
    for (std::size_t v : *simplex) kernels::axpy(1.0 / static_cast<double>(simplex->size()), points_.row(v), interior_);

    std::vector<std::size_t> new_facets;
    for (std::size_t skip = 0; skip < simplex->size(); ++skip) {
      std::vector<std::size_t> verts;
      for (std::size_t k = 0; k < simplex->size(); ++k) {
        if (k != skip) verts.push_back((*simplex)[k]);
      }
      new_facets.push_back(make_facet(std::move(verts)));
    }
    std::vector<bool> in_simplex(points_.rows(), false);
    for (std::size_t v : *simplex) in_simplex[v] = true;
    std::vector<std::size_t> pending;
    for (std::size_t p = 0; p < points_.rows(); ++p) {
      if (!in_simplex[p]) pending.push_back(p);
    }
    assign_outside(pending, new_facets);

    while (true) {
      const auto facet_it = std::find_if(facets_.begin(), facets_.end(),
                                         [](const Facet& f) { return f.alive && !f.outside.empty(); });
      if (facet_it == facets_.end()) break;
      const std::size_t eye = farthest_outside(*facet_it);
      expand(eye);
    }

    std::vector<std::size_t> vertices;
    for (const auto& f : facets_) {
      if (f.alive) vertices.insert(vertices.end(), f.vertices.begin(), f.vertices.end());
    }
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
    return vertices;
  }

 private:
  double distance(const Facet& f, std::size_t p) const { return kernels::dot(f.normal, points_.row(p)) - f.offset; }

  // Greedily picks dim+1 points, each farthest from the affine hull of the previous ones.
  std::optional<std::vector<std::size_t>> initial_simplex() const {
    std::size_t first = 0;
    for (std::size_t p = 1; p < points_.rows(); ++p) {
      if (points_(p, 0) < points_(first, 0)) first = p;
    }
    std::vector<std::size_t> chosen{first};
    std::vector<Vector> basis;  // orthonormal directions spanned so far
    const auto origin = points_.row(first);
    while (chosen.size() < dim_ + 1) {
      double best_dist = 0.0;
      std::size_t best = points_.rows();
      Vector best_residual;
      for (std::size_t p = 0; p < points_.rows(); ++p) {
        Vector r(dim_);
        for (std::size_t j = 0; j < dim_; ++j) r[j] = points_(p, j) - origin[j];
        for (const auto& b : basis) kernels::axpy(-kernels::dot(b, r), b, r);
        const double dist = std::sqrt(kernels::dot(r, r));
        if (dist > best_dist) {
          best_dist = dist;
          best = p;
          best_residual = std::move(r);
        }
      }
      if (best == points_.rows() || best_dist <= eps_ * 1e3) return std::nullopt;
      for (double& v : best_residual) v /= best_dist;
      basis.push_back(std::move(best_residual));
      chosen.push_back(best);
    }
    return chosen;
  }

  std::size_t make_facet(std::vector<std::size_t> verts) {
    std::sort(verts.begin(), verts.end());
    Facet f;
    // Normal: the unit vector orthogonal to every edge from the first vertex.
    std::vector<Vector> edges;
    const auto base = points_.row(verts[0]);
    for (std::size_t k = 1; k < verts.size(); ++k) {
      Vector e(dim_);
      for (std::size_t j = 0; j < dim_; ++j) e[j] = points_(verts[k], j) - base[j];
      for (const auto& b : edges) kernels::axpy(-kernels::dot(b, e), b, e);
      const double norm = std::sqrt(kernels::dot(e, e));
      if (norm > 0.0) {
        for (double& v : e) v /= norm;
        edges.push_back(std::move(e));
      }
    }
    double best_norm = -1.0;
    for (std::size_t axis = 0; axis < dim_; ++axis) {
      Vector candidate(dim_, 0.0);
      candidate[axis] = 1.0;
      for (const auto& b : edges) kernels::axpy(-kernels::dot(b, candidate), b, candidate);
      const double norm = std::sqrt(kernels::dot(candidate, candidate));
      if (norm > best_norm) {
        best_norm = norm;
        f.normal = std::move(candidate);
      }
    }
    for (double& v : f.normal) v /= best_norm;
    f.offset = kernels::dot(f.normal, base);
    if (kernels::dot(f.normal, interior_) - f.offset > 0.0) {
      for (double& v : f.normal) v = -v;
      f.offset = -f.offset;
    }
    f.vertices = std::move(verts);
    facets_.push_back(std::move(f));
    return facets_.size() - 1;
  }

  void assign_outside(const std::vector<std::size_t>& pending, const std::vector<std::size_t>& candidates) {
    for (std::size_t p : pending) {
      double best = eps_;
      std::size_t target = facets_.size();
      for (std::size_t fi : candidates) {
        const double d = distance(facets_[fi], p);
        if (d > best) {
          best = d;
          target = fi;
        }
      }
      if (target != facets_.size()) facets_[target].outside.push_back(p);
    }
  }

  std::size_t farthest_outside(const Facet& f) const {
    std::size_t eye = f.outside.front();
    double best = distance(f, eye);
    for (std::size_t p : f.outside) {
      const double d = distance(f, p);
      if (d > best || (d == best && p < eye)) {
        best = d;
        eye = p;
      }
    }
    return eye;
  }

  void expand(std::size_t eye) {
    std::vector<std::size_t> visible;
    for (std::size_t fi = 0; fi < facets_.size(); ++fi) {
      if (facets_[fi].alive && distance(facets_[fi], eye) > eps_) visible.push_back(fi);
    }
    std::map<std::vector<std::size_t>, int> ridge_count;
    for (std::size_t fi : visible) {
      const auto& verts = facets_[fi].vertices;
      for (std::size_t skip = 0; skip < verts.size(); ++skip) {
        std::vector<std::size_t> ridge;
        for (std::size_t k = 0; k < verts.size(); ++k) {
          if (k != skip) ridge.push_back(verts[k]);
        }
        ++ridge_count[ridge];
      }
    }
    std::vector<std::size_t> orphans;
    for (std::size_t fi : visible) {
      facets_[fi].alive = false;
      for (std::size_t p : facets_[fi].outside) {
        if (p != eye) orphans.push_back(p);
      }
      facets_[fi].outside.clear();
    }
    std::vector<std::size_t> created;
    for (const auto& [ridge, count] : ridge_count) {
      if (count != 1) continue;
      auto verts = ridge;
      verts.push_back(eye);
      created.push_back(make_facet(std::move(verts)));
    }
    std::sort(orphans.begin(), orphans.end());
    assign_outside(orphans, created);
  }

  const Matrix& points_;
  std::size_t dim_;
  double eps_ = 0.0;
  Vector interior_;
  std::vector<Facet> facets_;
};

}  // namespace

std::optional<std::vector<std::size_t>> quickhull_vertices(const Matrix& points) {
  return QuickHull(points).run();
}

}  // namespace ctrlsum::geometry
