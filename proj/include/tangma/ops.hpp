#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tangma/autodiff.hpp"
#include "tangma/tensor.hpp"

namespace tangma {

namespace kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

enum class Trans { No, Yes };

/// out (+)= op(a) * op(b), all row-major. a is (m x k) after op, b is (k x n).
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* out,
          bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  MutMap<T> C(out, M, N);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      C.noalias() += lhs * rhs;
    } else {
      C.noalias() = lhs * rhs;
    }
  };
  const bool a_t = ta == Trans::Yes, b_t = tb == Trans::Yes;
  if (!a_t && !b_t) run(ConstMap<T>(a, M, K), ConstMap<T>(b, K, N));
  if (!a_t && b_t) run(ConstMap<T>(a, M, K), ConstMap<T>(b, N, K).transpose());
  if (a_t && !b_t) run(ConstMap<T>(a, K, M).transpose(), ConstMap<T>(b, K, N));
  if (a_t && b_t) run(ConstMap<T>(a, K, M).transpose(), ConstMap<T>(b, N, K).transpose());
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Linear algebra

/// C = A B for A (m x k), B (k x n).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor<T> out({m, n});
  kernels::gemm(kernels::Trans::No, kernels::Trans::No, m, n, k, a.value().data().data(), b.value().data().data(),
                out.mutable_data().data(), false);
  return make_result<T>("matmul", std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    const T* dC = self.grad.data();
    if (A.requires_grad) {  // dA = dC B^T
      kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, m, k, n, dC, B.value.data().data(),
                    A.grad_buffer().data(), true);
    }
    if (B.requires_grad) {  // dB = A^T dC
      kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, k, n, m, A.value.data().data(), dC,
                    B.grad_buffer().data(), true);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

enum class Broadcast { None, ScalarLeft, ScalarRight };

template <typename T>
Broadcast check_binary(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.numel() == 1) return Broadcast::ScalarLeft;
  if (b.numel() == 1) return Broadcast::ScalarRight;
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Applies f elementwise with scalar broadcasting; df returns the partials
// (d/da, d/db) at one element.
template <typename T, typename F, typename DF>
Var<T> binary(const char* name, const Var<T>& a, const Var<T>& b, F f, DF df) {
  const Broadcast mode = check_binary(name, a, b);
  const Shape shape = mode == Broadcast::ScalarLeft ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  const auto av = a.value().data();
  const auto bv = b.value().data();
  const std::size_t sa = mode == Broadcast::ScalarLeft ? 0 : 1;
  const std::size_t sb = mode == Broadcast::ScalarRight ? 0 : 1;
  Tensor<T> out(shape);
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) o[i] = f(av[i * sa], bv[i * sb]);
  return make_result<T>(name, std::move(out), {a, b}, [n, sa, sb, df](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    const auto x = A.value.data();
    const auto y = B.value.data();
    T* ga = A.requires_grad ? A.grad_buffer().data() : nullptr;
    T* gb = B.requires_grad ? B.grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [da, db] = df(x[i * sa], y[i * sb]);
      if (ga) ga[i * sa] += self.grad[i] * da;
      if (gb) gb[i * sb] += self.grad[i] * db;
    }
  });
}

// f maps x -> y; df maps (x, y) -> dy/dx.
template <typename T, typename F, typename DF>
Var<T> unary(const char* name, const Var<T>& a, F f, DF df) {
  const std::size_t n = a.numel();
  const auto av = a.value().data();
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) o[i] = f(av[i]);
  return make_result<T>(name, std::move(out), {a}, [n, df](Node<T>& self) {
    auto& A = *self.inputs[0];
    const auto x = A.value.data();
    const auto y = self.value.data();
    auto g = A.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("add", a, b, [](T x, T y) { return x + y; },
                           [](T, T) { return std::pair<T, T>{T{1}, T{1}}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("sub", a, b, [](T x, T y) { return x - y; },
                           [](T, T) { return std::pair<T, T>{T{1}, T{-1}}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("mul", a, b, [](T x, T y) { return x * y; },
                           [](T x, T y) { return std::pair<T, T>{y, x}; });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  return detail::unary<T>("scale", a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return detail::unary<T>("add_scalar", a, [c](T x) { return x + c; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T{-1});
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary<T>("tanh", a, [](T x) { return std::tanh(x); },
                          [](T, T y) { return (T{1} - y) * (T{1} + y); });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return detail::unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  for (T x : a.value().data()) {
    if (!(x > T{0})) throw DomainError("log: non-positive input " + std::to_string(x));
  }
  return detail::unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

/// max(x, c) elementwise; the subgradient at x == c is 0.
template <typename T>
Var<T> max_scalar(const Var<T>& a, T c) {
  return detail::unary<T>("max_scalar", a, [c](T x) { return x > c ? x : c; },
                          [c](T x, T) { return x > c ? T{1} : T{0}; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total{0};
  for (T x : a.value().data()) total += x;
  return make_result<T>("sum", Tensor<T>::scalar(total), {a}, [](Node<T>& self) {
    auto g = self.inputs[0]->grad_buffer();
    const T d = self.grad[0];
    for (auto& v : g) v += d;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

/// sum(a .* w) with w held constant; the scalarisation used by gradient checks.
template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& weights) {
  return sum(mul(a, Var<T>::constant(weights)));
}

// ---------------------------------------------------------------------------
// Shape

/// Same data, new shape; the gradient is routed back unchanged.
template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_result<T>("reshape", a.value().reshape(std::move(shape)), {a}, [](Node<T>& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// [B x d1 x d2 ...] -> [B x (d1 d2 ...)].
template <typename T>
Var<T> flatten(const Var<T>& a) {
  if (a.shape().empty()) throw ShapeError("flatten: rank-0 input");
  const std::size_t batch = a.shape()[0];
  return reshape(a, Shape{batch, batch ? a.numel() / batch : 0});
}

// ---------------------------------------------------------------------------
// Explicit bias additions (no general broadcasting)

/// x [rows x cols] + b [cols], b added to every row.
template <typename T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& b) {
  if (x.shape().size() != 2 || b.numel() != x.shape()[1]) {
    throw ShapeError("add_row_bias: " + to_string(x.shape()) + " with bias " + to_string(b.shape()));
  }
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> out = x.value().clone();
  auto o = out.mutable_data();
  const auto bv = b.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] += bv[c];
  return make_result<T>("add_row_bias", std::move(out), {x, b}, [rows, cols](Node<T>& self) {
    auto& X = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (X.requires_grad) {
      auto g = X.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto g = B.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
    }
  });
}

/// x [B x C x ...] + b [C], b[c] added to every element of channel c.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  if (x.shape().size() < 2 || b.numel() != x.shape()[1]) {
    throw ShapeError("add_channel_bias: " + to_string(x.shape()) + " with bias " + to_string(b.shape()));
  }
  const std::size_t batch = x.shape()[0], channels = x.shape()[1];
  const std::size_t plane = channels ? x.numel() / (batch * channels) : 0;
  Tensor<T> out = x.value().clone();
  auto o = out.mutable_data();
  const auto bv = b.value().data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) o[(n * channels + c) * plane + i] += bv[c];
  return make_result<T>("add_channel_bias", std::move(out), {x, b}, [batch, channels, plane](Node<T>& self) {
    auto& X = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (X.requires_grad) {
      auto g = X.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto g = B.grad_buffer();
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t i = 0; i < plane; ++i) g[c] += self.grad[(n * channels + c) * plane + i];
    }
  });
}

}  // namespace tangma
