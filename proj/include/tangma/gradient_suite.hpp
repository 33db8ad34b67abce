#pragma once

// Finite-difference audit of every differentiable op in the library, run in
// double precision. Each check draws fresh random instances and reports the
// worst relative error seen.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tangma/activations.hpp"
#include "tangma/grad_check.hpp"
#include "tangma/layers.hpp"
#include "tangma/loss.hpp"
#include "tangma/model.hpp"
#include "tangma/ops.hpp"

namespace tangma {

struct GradCheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
};

struct GradientSuiteOptions {
  std::size_t instances = 100;
  double step = 1e-4;
  std::uint64_t seed = 2024;
  bool include_models = true;  // end-to-end checks on both architectures
  double model_step = 1e-6;  // larger steps flip near-tied pool windows
};

namespace detail {

class CheckRunner {
 public:
  explicit CheckRunner(const GradientSuiteOptions& opt) : opt_(opt), rng_(opt.seed) {}

  Tensor<double> uniform(Shape shape, double lo = -3.0, double hi = 3.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = dist(rng_);
    return t;
  }

  // Values in [-3, 3] whose magnitude is at least `gap`, keeping kinks out of
  // the central-difference stencil.
  Tensor<double> away_from_zero(Shape shape, double gap) {
    Tensor<double> t = uniform(std::move(shape), gap, 3.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.mutable_data())
      if (sign(rng_)) v = -v;
    return t;
  }

  // Distinct values spaced >= 0.01 apart, so no pooling window has a
  // near-tie that a step of h could flip.
  Tensor<double> separated(Shape shape) {
    Tensor<double> t(std::move(shape));
    std::vector<std::size_t> rank(t.numel());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::shuffle(rank.begin(), rank.end(), rng_);
    const double spacing = std::max(0.01, 6.0 / static_cast<double>(rank.size()));
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -3.0 + spacing * static_cast<double>(rank[i]);
    return t;
  }

  std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
  std::mt19937_64& rng() { return rng_; }

  // Runs `one` instances times; `one` returns the error of a single instance.
  void run(const std::string& name, const std::function<double()>& one, std::size_t count = 0) {
    if (count == 0) count = opt_.instances;
    GradCheckResult r{name, count, 0.0};
    for (std::size_t i = 0; i < count; ++i) r.max_error = std::max(r.max_error, one());
    results_.push_back(r);
  }

  void record(GradCheckResult r) { results_.push_back(std::move(r)); }

  double h() const { return opt_.step; }
  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  GradientSuiteOptions opt_;
  std::mt19937_64 rng_;
  std::vector<GradCheckResult> results_;
};

using V = Var<double>;
using D = Tensor<double>;

// Scalar probe sum(y .* r) of a unary map.
inline double check_unary(CheckRunner& c, const std::function<V(const V&)>& op, const D& x) {
  std::optional<D> r;
  return grad_check(
      [&](const V& in) {
        V y = op(in);
        if (!r) r = c.uniform(y.shape(), -1.0, 1.0);
        return weighted_sum(y, *r);
      },
      x, c.h());
}

}  // namespace detail

inline std::vector<GradCheckResult> run_gradient_suite(const GradientSuiteOptions& opt = {}) {
  using detail::D;
  using detail::V;
  detail::CheckRunner c(opt);
  const double h = opt.step;

  // --- elementwise and algebra
  c.run("add", [&] {
    const D b = c.uniform({2, 3});
    return detail::check_unary(c, [&](const V& x) { return add(x, V::constant(b)); }, c.uniform({2, 3}));
  });
  c.run("sub", [&] {
    const D b = c.uniform({2, 3});
    return detail::check_unary(c, [&](const V& x) { return sub(V::constant(b), x); }, c.uniform({2, 3}));
  });
  c.run("mul", [&] {
    const D b = c.uniform({2, 3});
    return detail::check_unary(c, [&](const V& x) { return mul(x, V::constant(b)); }, c.uniform({2, 3}));
  });
  c.run("mul.scalar_broadcast", [&] {
    const D b = c.uniform({2, 3});
    return detail::check_unary(c, [&](const V& s) { return mul(s, V::constant(b)); }, c.uniform({1}));
  });
  c.run("tanh", [&] { return detail::check_unary(c, [](const V& x) { return tanh(x); }, c.uniform({6})); });
  c.run("exp", [&] { return detail::check_unary(c, [](const V& x) { return exp(x); }, c.uniform({6})); });
  c.run("log", [&] { return detail::check_unary(c, [](const V& x) { return log(x); }, c.uniform({6}, 0.5, 3.0)); });
  c.run("max_scalar", [&] {
    return detail::check_unary(c, [](const V& x) { return max_scalar(x, 0.0); }, c.away_from_zero({6}, 0.01));
  });
  c.run("matmul.lhs", [&] {
    const D b = c.uniform({3, 4});
    return detail::check_unary(c, [&](const V& a) { return matmul(a, V::constant(b)); }, c.uniform({2, 3}));
  });
  c.run("matmul.rhs", [&] {
    const D a = c.uniform({2, 3});
    return detail::check_unary(c, [&](const V& b) { return matmul(V::constant(a), b); }, c.uniform({3, 4}));
  });
  c.run("mean", [&] { return grad_check([](const V& x) { return mean(mul(x, x)); }, c.uniform({2, 5}), h); });
  c.run("reshape", [&] {
    return detail::check_unary(c, [](const V& x) { return reshape(x, Shape{3, 4}); }, c.uniform({2, 6}));
  });
  c.run("flatten", [&] { return detail::check_unary(c, [](const V& x) { return flatten(x); }, c.uniform({2, 2, 2, 3})); });
  c.run("add_row_bias", [&] {
    const D x = c.uniform({3, 4});
    return detail::check_unary(c, [&](const V& b) { return add_row_bias(V::constant(x), b); }, c.uniform({4}));
  });
  c.run("add_channel_bias", [&] {
    const D x = c.uniform({2, 3, 2, 2});
    return detail::check_unary(c, [&](const V& b) { return add_channel_bias(V::constant(x), b); }, c.uniform({3}));
  });

  // --- activations
  c.run("relu", [&] { return detail::check_unary(c, [](const V& x) { return relu(x); }, c.away_from_zero({8}, 0.01)); });
  c.run("swish", [&] { return detail::check_unary(c, [](const V& x) { return swish(x); }, c.uniform({8})); });
  c.run("gelu", [&] { return detail::check_unary(c, [](const V& x) { return gelu(x); }, c.uniform({8})); });
  const auto random_tangma = [&] {
    const D ag = c.uniform({2}, -1.0, 1.0);
    return TangmaParams<double>::trainable(ag[0], ag[1]);
  };
  c.run("tangma.x", [&] {
    const auto p = random_tangma();
    return detail::check_unary(c, [&](const V& x) { return tangma(x, p); }, c.uniform({8}));
  });
  c.run("tangma.alpha", [&] {
    const auto p = random_tangma();
    const D x = c.uniform({8}), r = c.uniform({8}, -1.0, 1.0);
    return grad_check_parameter([&] { return weighted_sum(tangma(V::constant(x), p), r); }, p.alpha, h);
  });
  c.run("tangma.gamma", [&] {
    const auto p = random_tangma();
    const D x = c.uniform({8}), r = c.uniform({8}, -1.0, 1.0);
    return grad_check_parameter([&] { return weighted_sum(tangma(V::constant(x), p), r); }, p.gamma, h);
  });

  // --- layers
  struct ConvCase {
    ConvSpec<double> spec;
    D x;
  };
  const auto random_conv = [&] {
    ConvSpec<double> s;
    s.in_channels = c.pick(1, 2);
    s.out_channels = c.pick(1, 3);
    s.kernel = c.pick(1, 3);
    s.stride = c.pick(1, 2);
    s.padding = c.pick(0, 1);
    std::size_t side = 5 + c.pick(0, 2);
    while ((side + 2 * s.padding - s.kernel) % s.stride != 0) ++side;
    s.weights = V::parameter(c.uniform({s.out_channels, s.in_channels, s.kernel, s.kernel}));
    s.bias = V::parameter(c.uniform({s.out_channels}));
    return ConvCase{s, c.uniform({2, s.in_channels, side, side})};
  };
  c.run("conv2d.input", [&] {
    const auto cc = random_conv();
    return detail::check_unary(c, [&](const V& x) { return conv2d(x, cc.spec); }, cc.x);
  });
  c.run("conv2d.weights", [&] {
    const auto cc = random_conv();
    const V x = V::constant(cc.x);
    const D r = c.uniform(conv2d(x, cc.spec).shape(), -1.0, 1.0);
    return grad_check_parameter([&] { return weighted_sum(conv2d(x, cc.spec), r); }, cc.spec.weights, h);
  });
  c.run("conv2d.bias", [&] {
    const auto cc = random_conv();
    const V x = V::constant(cc.x);
    const D r = c.uniform(conv2d(x, cc.spec).shape(), -1.0, 1.0);
    return grad_check_parameter([&] { return weighted_sum(conv2d(x, cc.spec), r); }, cc.spec.bias, h);
  });
  c.run("maxpool2d", [&] {
    return detail::check_unary(c, [](const V& x) { return maxpool2d(x); }, c.separated({2, 2, 4, 4}));
  });
  c.run("linear.input", [&] {
    const V w = V::constant(c.uniform({4, 5})), b = V::constant(c.uniform({4}));
    return detail::check_unary(c, [&](const V& x) { return linear(x, w, b); }, c.uniform({3, 5}));
  });
  c.run("linear.weights", [&] {
    const V x = V::constant(c.uniform({3, 5})), b = V::constant(c.uniform({4}));
    return detail::check_unary(c, [&](const V& w) { return linear(x, w, b); }, c.uniform({4, 5}));
  });
  c.run("linear.bias", [&] {
    const V x = V::constant(c.uniform({3, 5})), w = V::constant(c.uniform({4, 5}));
    return detail::check_unary(c, [&](const V& b) { return linear(x, w, b); }, c.uniform({4}));
  });
  c.run("dropout", [&] {
    const std::uint64_t mask_seed = c.rng()();
    return detail::check_unary(
        c,
        [&](const V& x) {
          std::mt19937_64 fixed(mask_seed);  // same mask on every evaluation
          return dropout(x, DropoutSpec{0.5, Mode::Train}, fixed);
        },
        c.uniform({10}));
  });

  // --- loss
  c.run("cross_entropy", [&] {
    std::vector<int> labels(4);
    for (auto& y : labels) y = static_cast<int>(c.pick(0, 9));
    return grad_check([&](const V& z) { return cross_entropy(z, labels); }, c.uniform({4, 10}), h);
  });

  // --- end-to-end: 2-sample micro-batch, dropout off, sampled coordinates
  if (opt.include_models) {
    for (auto arch : {Architecture::Mnist, Architecture::Cifar10}) {
      ModelSpec spec;
      spec.architecture = arch;
      spec.activation = ActivationKind::Tangma;
      spec.init_seed = opt.seed;
      auto model = build_model<double>(spec);
      // Move alpha and gamma off 0 so their gradients are generic.
      model.parameter("tangma.alpha").mutable_value()[0] = 0.3;
      model.parameter("tangma.gamma").mutable_value()[0] = 0.1;
      Shape in = input_shape(arch);
      in.insert(in.begin(), 2);
      const D x = c.uniform(in, arch == Architecture::Mnist ? 0.0 : -1.0, 1.0);
      const std::vector<int> labels{static_cast<int>(c.pick(0, 9)), static_cast<int>(c.pick(0, 9))};
      std::mt19937_64 unused(0);
      const auto loss = [&] { return cross_entropy(model.forward(x, Mode::Eval, unused), labels); };
      GradCheckResult r{"model." + std::string(to_string(arch)), 0, 0.0};
      for (const auto& p : model.named_parameters()) {
        const std::size_t n = p.var.numel();
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < std::min<std::size_t>(n, 6); ++k) idx.push_back(c.pick(0, n - 1));
        r.max_error = std::max(r.max_error, grad_check_parameter(loss, p.var, opt.model_step, idx));
        r.instances += idx.size();
      }
      c.record(r);
    }
  }
  return c.take();
}

}  // namespace tangma
