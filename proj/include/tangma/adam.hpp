#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tangma/autodiff.hpp"

namespace tangma {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction; no weight decay, no clipping.
/// Moments are kept in double regardless of the parameter type.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamConfig config = {}) : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void step() {
    for (const auto& p : params_) {
      if (!p.has_grad()) throw ContractError("adam: parameter has no gradient; run backward() before step()");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto theta = params_[k].mutable_value();
      const auto grad = params_[k].grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        theta[i] = static_cast<T>(static_cast<double>(theta[i]) - config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
      }
    }
  }

  void zero_grad() { zero_grads(params_); }

  std::int64_t step_count() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<double>& first_moment(std::size_t k) const { return m_.at(k); }
  const std::vector<double>& second_moment(std::size_t k) const { return v_.at(k); }
  const std::vector<Var<T>>& params() const noexcept { return params_; }

 private:
  std::vector<Var<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace tangma
