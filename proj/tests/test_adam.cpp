#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tangma/activations.hpp"
#include "tangma/adam.hpp"
#include "tangma/ops.hpp"
#include "test_util.hpp"

using namespace tangma;

namespace {

constexpr double kTheta1 = -0.0009999999800000004;  // theta=0, g=0.5, t=1 (exact rational)

// Parameter with a fixed gradient: loss = sum(g * theta).
template <typename T>
void set_grad(Adam<T>& opt, const Var<T>& p, const Tensor<T>& g) {
  opt.zero_grad();
  backward(weighted_sum(p, g));
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = Var<double>::parameter(test::random_tensor({5}, 1));
  const auto before = p.value().clone();
  Adam<double> opt({p});
  for (int i = 0; i < 3; ++i) {
    set_grad(opt, p, Tensor<double>({5}, 0.0));
    opt.step();
  }
  EXPECT_EQ(p.value(), before);
  EXPECT_EQ(opt.step_count(), 3);
}

TEST(Adam, FirstStepValue) {
  auto p = Var<double>::parameter(Tensor<double>({1}, 0.0));
  Adam<double> opt({p});
  set_grad(opt, p, Tensor<double>({1}, 0.5));
  opt.step();
  EXPECT_NEAR(p.value()[0], kTheta1, 1e-18);
  EXPECT_DOUBLE_EQ(opt.first_moment(0)[0], 0.05);
  EXPECT_NEAR(opt.second_moment(0)[0], 0.001 * 0.25, 1e-15);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  for (double g : {1e-3, -0.2, 0.5, 7.0, -1e4}) {
    auto p = Var<double>::parameter(Tensor<double>({3}, 1.0));
    Adam<double> opt({p});
    set_grad(opt, p, Tensor<double>({3}, g));
    opt.step();
    for (double v : p.value().data()) {
      const double delta = std::abs(v - 1.0);
      EXPECT_GE(delta, 0.99 * 0.001) << g;
      EXPECT_LE(delta, 0.001) << g;
    }
  }
}

TEST(Adam, ScaleRobustAtFirstStep) {
  const auto g = test::random_tensor({6}, 2, 0.1, 1.0);
  Tensor<double> g1000 = g.clone();
  for (auto& v : g1000.mutable_data()) v *= 1000.0;
  auto a = Var<double>::parameter(Tensor<double>({6}, 0.0));
  auto b = Var<double>::parameter(Tensor<double>({6}, 0.0));
  Adam<double> oa({a}), ob({b});
  set_grad(oa, a, g);
  set_grad(ob, b, g1000);
  oa.step();
  ob.step();
  for (std::size_t i = 0; i < 6; ++i) EXPECT_LT(std::abs(a.value()[i] - b.value()[i]) / std::abs(a.value()[i]), 1e-6);
}

TEST(Adam, SecondMomentNonNegative) {
  auto p = Var<double>::parameter(test::random_tensor({10}, 3));
  Adam<double> opt({p});
  for (int t = 0; t < 20; ++t) {
    set_grad(opt, p, test::random_tensor({10}, 100 + t, -5.0, 5.0));
    opt.step();
    for (double v : opt.second_moment(0)) EXPECT_GE(v, 0.0);
  }
}

TEST(Adam, MissingGradientIsContractError) {
  auto p = Var<float>::parameter(Tensor<float>({2}, 1.0f));
  Adam<float> opt({p});
  EXPECT_THROW(opt.step(), ContractError);
  opt.zero_grad();
  EXPECT_THROW(opt.step(), ContractError);
  EXPECT_EQ(opt.step_count(), 0);
}

TEST(Adam, UpdatesTangmaParamsLikeWeights) {
  TangmaParams<double> tp;
  auto w = Var<double>::parameter(Tensor<double>({1}, 0.0));
  Adam<double> opt({tp.alpha, tp.gamma, w});
  opt.zero_grad();
  // identical unit gradient on every scalar
  backward(add(add(sum(tp.alpha), sum(tp.gamma)), sum(w)));
  opt.step();
  EXPECT_EQ(tp.alpha_value(), w.value()[0]);
  EXPECT_EQ(tp.gamma_value(), w.value()[0]);
  EXPECT_NE(w.value()[0], 0.0);
}

TEST(Adam, DeterministicTrajectories) {
  const auto run = [] {
    auto p = Var<float>::parameter(test::random_tensor<float>({8}, 4));
    Adam<float> opt({p});
    std::vector<float> trace;
    for (int t = 0; t < 50; ++t) {
      opt.zero_grad();
      backward(sum(tanh(mul(p, p))));
      opt.step();
      trace.insert(trace.end(), p.value().data().begin(), p.value().data().end());
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}
