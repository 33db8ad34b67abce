#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tangma/autodiff.hpp"
#include "tangma/tensor.hpp"

namespace tangma {

/// |analytic - numeric| / max(1, |analytic|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

/// Compares the autodiff gradient of scalar f at x against central
/// differences with step h. Returns the max relative error over elements.
inline double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
                         double h = 1e-4) {
  auto input = Var<double>::parameter(x.clone());
  backward(f(input));
  const std::vector<double> analytic(input.grad().begin(), input.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  auto values = input.mutable_value();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f(input).value().item();
    values[i] = saved - h;
    const double down = f(input).value().item();
    values[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

/// Same check for a leaf parameter that f closes over, perturbing it in
/// place. `indices` restricts the check to a subset of coordinates (all when
/// empty). The caller's gradient on `param` is left as it was found; other
/// leaves reached by f accumulate one extra backward pass.
inline double grad_check_parameter(const std::function<Var<double>()>& f, Var<double> param, double h = 1e-4,
                                   std::span<const std::size_t> indices = {}) {
  const std::vector<double> saved_grad(param.grad().begin(), param.grad().end());
  auto& grad = param.node().grad;
  std::fill(grad.begin(), grad.end(), 0.0);
  backward(f());
  const std::vector<double> analytic(param.grad().begin(), param.grad().end());
  grad = saved_grad;

  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(param.numel());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  NoGradGuard no_grad;
  double worst = 0.0;
  auto values = param.mutable_value();
  for (std::size_t i : indices) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f().value().item();
    values[i] = saved - h;
    const double down = f().value().item();
    values[i] = saved;
    worst = std::max(worst, relative_error(analytic.at(i), (up - down) / (2.0 * h)));
  }
  return worst;
}

}  // namespace tangma
