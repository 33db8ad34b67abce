#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tangma/autodiff.hpp"
#include "tangma/ops.hpp"
#include "tangma/tensor.hpp"

namespace tangma {

enum class ActivationKind { ReLU, Swish, GELU, Tangma };

inline constexpr std::array<ActivationKind, 4> kAllActivations = {ActivationKind::ReLU, ActivationKind::Swish,
                                                                   ActivationKind::GELU, ActivationKind::Tangma};

inline std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::ReLU:
      return "relu";
    case ActivationKind::Swish:
      return "swish";
    case ActivationKind::GELU:
      return "gelu";
    case ActivationKind::Tangma:
      return "tangma";
  }
  return "unknown";
}

inline std::optional<ActivationKind> parse_activation(std::string_view name) {
  for (auto kind : kAllActivations)
    if (to_string(kind) == name) return kind;
  return std::nullopt;
}

/// Learnable (alpha, gamma) of a Tangma site: alpha shifts the tanh inflection
/// to x = -alpha, gamma scales the linear skip path. Both start at 0.
template <typename T>
struct TangmaParams {
  Var<T> alpha = Var<T>::parameter(Tensor<T>::scalar(T{0}));
  Var<T> gamma = Var<T>::parameter(Tensor<T>::scalar(T{0}));

  static TangmaParams fixed(T alpha, T gamma) {
    return {Var<T>::constant(Tensor<T>::scalar(alpha)), Var<T>::constant(Tensor<T>::scalar(gamma))};
  }
  static TangmaParams trainable(T alpha, T gamma) {
    return {Var<T>::parameter(Tensor<T>::scalar(alpha)), Var<T>::parameter(Tensor<T>::scalar(gamma))};
  }

  T alpha_value() const { return alpha.value().item(); }
  T gamma_value() const { return gamma.value().item(); }
};

// ---------------------------------------------------------------------------
// Scalar kernels

namespace scalar {

// (1 - t)(1 + t) with t = tanh(u); stays finite where cosh(u) would overflow.
template <typename T>
T sech2_from_tanh(T t) {
  return (T{1} - t) * (T{1} + t);
}

template <typename T>
T tangma(T x, T alpha, T gamma) {
  return x * std::tanh(x + alpha) + gamma * x;
}

template <typename T>
T tangma_derivative(T x, T alpha, T gamma) {
  const T t = std::tanh(x + alpha);
  return t + x * sech2_from_tanh(t) + gamma;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// Standard normal CDF; erfc keeps the left tail accurate.
template <typename T>
T normal_cdf(T x) {
  return T{0.5} * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <typename T>
T normal_pdf(T x) {
  return std::exp(T{-0.5} * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
}

}  // namespace scalar

// ---------------------------------------------------------------------------
// Graph ops

/// x * tanh(x + alpha) + gamma * x, differentiable in x, alpha and gamma.
template <typename T>
Var<T> tangma(const Var<T>& x, const TangmaParams<T>& p) {
  if (p.alpha.numel() != 1 || p.gamma.numel() != 1) throw ShapeError("tangma: alpha and gamma must be scalars");
  const T alpha = p.alpha.value().item();
  const T gamma = p.gamma.value().item();
  const std::size_t n = x.numel();
  const auto xv = x.value().data();
  std::vector<T> th(n);
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    th[i] = std::tanh(xv[i] + alpha);
    o[i] = xv[i] * th[i] + gamma * xv[i];
  }
  return make_result<T>("tangma", std::move(out), {x, p.alpha, p.gamma},
                        [n, gamma, th = std::move(th)](Node<T>& self) {
                          auto& X = *self.inputs[0];
                          auto& A = *self.inputs[1];
                          auto& G = *self.inputs[2];
                          const auto xv = X.value.data();
                          const T* g = self.grad.data();
                          if (X.requires_grad) {
                            auto gx = X.grad_buffer();
                            for (std::size_t i = 0; i < n; ++i)
                              gx[i] += g[i] * (th[i] + xv[i] * scalar::sech2_from_tanh(th[i]) + gamma);
                          }
                          if (A.requires_grad) {
                            T acc{0};
                            for (std::size_t i = 0; i < n; ++i) acc += g[i] * xv[i] * scalar::sech2_from_tanh(th[i]);
                            A.grad_buffer()[0] += acc;
                          }
                          if (G.requires_grad) {
                            T acc{0};
                            for (std::size_t i = 0; i < n; ++i) acc += g[i] * xv[i];
                            G.grad_buffer()[0] += acc;
                          }
                        });
}

/// Elementwise d/dx Tangma as a plain tensor (not part of any graph).
template <typename T>
Tensor<T> tangma_derivative(const Tensor<T>& x, T alpha, T gamma) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.data();
  for (std::size_t i = 0; i < xv.size(); ++i) o[i] = scalar::tangma_derivative(xv[i], alpha, gamma);
  return out;
}

template <typename T>
Tensor<T> tangma_derivative(const Tensor<T>& x, const TangmaParams<T>& p) {
  return tangma_derivative(x, p.alpha_value(), p.gamma_value());
}

/// max(0, x); derivative taken as 0 at x == 0.
template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>("relu", x, [](T v) { return v > T{0} ? v : T{0}; },
                          [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> swish(const Var<T>& x) {
  return detail::unary<T>("swish", x, [](T v) { return v * scalar::sigmoid(v); },
                          [](T v, T) {
                            const T s = scalar::sigmoid(v);
                            return s + v * s * (T{1} - s);
                          });
}

/// Exact erf form x * Phi(x).
template <typename T>
Var<T> gelu(const Var<T>& x) {
  return detail::unary<T>("gelu", x, [](T v) { return v * scalar::normal_cdf(v); },
                          [](T v, T) { return scalar::normal_cdf(v) + v * scalar::normal_pdf(v); });
}

/// Dispatch on kind. `params` is consulted only for Tangma.
template <typename T>
Var<T> activate(ActivationKind kind, const Var<T>& x, const TangmaParams<T>* params = nullptr) {
  switch (kind) {
    case ActivationKind::ReLU:
      return relu(x);
    case ActivationKind::Swish:
      return swish(x);
    case ActivationKind::GELU:
      return gelu(x);
    case ActivationKind::Tangma:
      if (!params) throw ContractError("activate: tangma needs TangmaParams");
      return tangma(x, *params);
  }
  throw std::invalid_argument("activate: unknown activation kind");
}

}  // namespace tangma
