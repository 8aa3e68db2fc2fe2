#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctrlsum {

/// A named, shaped block of trainable weights (row-major).
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered tensor collection. Order is significant: it is the on-disk order.
class ParameterSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const noexcept { return tensors_.size(); }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  ParameterSet zeros_like() const;
  void set_zero();
  std::size_t scalar_count() const;
  bool all_finite() const;
  bool same_layout(const ParameterSet& other) const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Tensor> tensors_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 penalty folded into the gradient (g += weight_decay * w), as in classic Adam.
  double weight_decay = 0.0;
};

/// Adam over a subset of the tensors of one ParameterSet.
class Adam {
 public:
  Adam(AdamConfig config, const ParameterSet& params, std::vector<std::size_t> group);

  /// Updates only the tensors in the group; others are left untouched.
  void step(ParameterSet& params, const ParameterSet& grads);

  const std::vector<std::size_t>& group() const noexcept { return group_; }

 private:
  AdamConfig config_;
  std::vector<std::size_t> group_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_count_ = 0;
};

}  // namespace ctrlsum
