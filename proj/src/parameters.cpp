#include "ctrlsum/parameters.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "ctrlsum/error.hpp"

namespace ctrlsum {

std::size_t ParameterSet::add(std::string name, std::vector<std::size_t> shape) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  tensors_.push_back(Tensor{std::move(name), std::move(shape), std::vector<double>(count, 0.0)});
  return tensors_.size() - 1;
}

const Tensor& ParameterSet::at(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error("no tensor named '" + std::string(name) + "'");
}

Tensor& ParameterSet::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParameterSet&>(*this).at(name));
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& t : tensors_) out.add(t.name, t.shape);
  return out;
}

void ParameterSet::set_zero() {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors_[i].name != other[i].name || tensors_[i].shape != other[i].shape) return false;
  }
  return true;
}

Adam::Adam(AdamConfig config, const ParameterSet& params, std::vector<std::size_t> group)
    : config_(config), group_(std::move(group)) {
  for (std::size_t idx : group_) {
    if (idx >= params.size()) throw Error("optimizer group index out of range");
    m_.emplace_back(params[idx].values.size(), 0.0);
    v_.emplace_back(params[idx].values.size(), 0.0);
  }
}

void Adam::step(ParameterSet& params, const ParameterSet& grads) {
  ++step_count_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  const double step_size = config_.lr / bias1;
  const double bias2_sqrt = std::sqrt(bias2);
  for (std::size_t g = 0; g < group_.size(); ++g) {
    auto& w = params[group_[g]].values;
    const auto& grad = grads[group_[g]].values;
    auto& m = m_[g];
    auto& v = v_[g];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = grad[i] + config_.weight_decay * w[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) / bias2_sqrt + config_.eps);
    }
  }
}

}  // namespace ctrlsum
