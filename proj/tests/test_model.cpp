#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "tangma/gradient_suite.hpp"
#include "tangma/model.hpp"
#include "test_util.hpp"

using namespace tangma;
namespace fs = std::filesystem;

namespace {

ModelSpec spec_for(Architecture arch, ActivationKind act, std::uint64_t seed = 1) {
  ModelSpec s;
  s.architecture = arch;
  s.activation = act;
  s.init_seed = seed;
  return s;
}

std::vector<double> values(const Var<double>& v) { return {v.value().data().begin(), v.value().data().end()}; }

// Valid cross-correlation, stride 1, no padding: in [C x H x W] -> [O x H-K+1 x W-K+1]
std::vector<double> ref_conv(const std::vector<double>& in, std::size_t C, std::size_t H, const std::vector<double>& w,
                             const std::vector<double>& b, std::size_t O, std::size_t K) {
  const std::size_t Ho = H - K + 1;
  std::vector<double> out(O * Ho * Ho);
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Ho; ++x) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx)
              acc += w[((o * C + c) * K + ky) * K + kx] * in[(c * H + y + ky) * H + x + kx];
        out[(o * Ho + y) * Ho + x] = acc;
      }
  return out;
}

void xtanhx(std::vector<double>& v) {
  for (auto& x : v) x = x * std::tanh(x);
}

}  // namespace

TEST(Model, ParameterCounts) {
  for (auto act : kAllActivations) {
    const std::size_t extra = act == ActivationKind::Tangma ? 2 : 0;
    EXPECT_EQ(build_model<float>(spec_for(Architecture::Mnist, act)).parameter_count(),
              320u + 18496u + 1179776u + 1290u + extra);
    EXPECT_EQ(build_model<float>(spec_for(Architecture::Cifar10, act)).parameter_count(),
              896u + 18496u + 73856u + 1049088u + 5130u + extra);
  }
  EXPECT_EQ(build_model<float>(spec_for(Architecture::Mnist, ActivationKind::ReLU)).parameter_count(), 1199882u);
  EXPECT_EQ(build_model<float>(spec_for(Architecture::Cifar10, ActivationKind::ReLU)).parameter_count(), 1147466u);
}

TEST(Model, PerSiteTangmaOption) {
  auto mnist = spec_for(Architecture::Mnist, ActivationKind::Tangma);
  mnist.shared_tangma_params = false;
  const auto m = build_model<float>(mnist);
  EXPECT_EQ(m.tangma_params().size(), 3u);
  EXPECT_EQ(m.parameter_count(), 1199882u + 6u);
  EXPECT_NO_THROW((void)m.parameter("tangma3.gamma"));

  auto cifar = spec_for(Architecture::Cifar10, ActivationKind::Tangma);
  cifar.shared_tangma_params = false;
  EXPECT_EQ(build_model<float>(cifar).parameter_count(), 1147466u + 8u);
}

TEST(Model, TangmaParamsStartAtZeroAndAreRegistered) {
  const auto m = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::Tangma));
  EXPECT_EQ(m.parameter("tangma.alpha").value().item(), 0.0f);
  EXPECT_EQ(m.parameter("tangma.gamma").value().item(), 0.0f);
  EXPECT_THROW((void)build_model<float>(spec_for(Architecture::Mnist, ActivationKind::ReLU)).parameter("tangma.alpha"),
               std::out_of_range);
}

TEST(Model, InitIsSeededFanInUniform) {
  const auto a = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::GELU, 5));
  const auto b = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::GELU, 5));
  const auto c = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::GELU, 6));
  for (std::size_t i = 0; i < a.named_parameters().size(); ++i) {
    EXPECT_EQ(a.named_parameters()[i].var.value(), b.named_parameters()[i].var.value());
  }
  EXPECT_NE(a.parameter("conv1.weight").value(), c.parameter("conv1.weight").value());

  const float bound = 1.0f / std::sqrt(9216.0f);
  float widest = 0.0f;
  for (float v : a.parameter("fc1.weight").value().data()) widest = std::max(widest, std::abs(v));
  EXPECT_LE(widest, bound);
  EXPECT_GT(widest, 0.99f * bound);
}

TEST(Model, MnistShapeChain) {
  auto m = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::Tangma));
  std::mt19937_64 rng(1);
  const auto logits = m.forward(Tensor<float>({64, 1, 28, 28}, 0.5f), Mode::Train, rng);
  EXPECT_EQ(logits.shape(), (Shape{64, 10}));
  const std::vector<std::pair<std::string, Shape>> expected{
      {"conv1", {64, 32, 26, 26}}, {"act1", {64, 32, 26, 26}}, {"conv2", {64, 64, 24, 24}},
      {"act2", {64, 64, 24, 24}},  {"pool", {64, 64, 12, 12}}, {"drop1", {64, 64, 12, 12}},
      {"flatten", {64, 9216}},     {"fc1", {64, 128}},         {"act3", {64, 128}},
      {"drop2", {64, 128}},        {"fc2", {64, 10}},
  };
  EXPECT_EQ(m.stage_shapes(), expected);
}

TEST(Model, CifarShapeChain) {
  auto m = build_model<float>(spec_for(Architecture::Cifar10, ActivationKind::ReLU));
  std::mt19937_64 rng(1);
  const auto logits = m.forward(Tensor<float>({128, 3, 32, 32}, 0.1f), Mode::Train, rng);
  EXPECT_EQ(logits.shape(), (Shape{128, 10}));
  const std::vector<std::pair<std::string, Shape>> expected{
      {"conv1", {128, 32, 32, 32}}, {"act1", {128, 32, 32, 32}}, {"pool1", {128, 32, 16, 16}},
      {"conv2", {128, 64, 16, 16}}, {"act2", {128, 64, 16, 16}}, {"pool2", {128, 64, 8, 8}},
      {"conv3", {128, 128, 8, 8}},  {"act3", {128, 128, 8, 8}},  {"pool3", {128, 128, 4, 4}},
      {"flatten", {128, 2048}},     {"fc1", {128, 512}},         {"act4", {128, 512}},
      {"drop", {128, 512}},         {"fc2", {128, 10}},
  };
  EXPECT_EQ(m.stage_shapes(), expected);
}

TEST(Model, InputShapeMismatch) {
  auto m = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::ReLU));
  std::mt19937_64 rng(1);
  EXPECT_THROW((void)m.forward(Tensor<float>({2, 3, 32, 32}), Mode::Eval, rng), ShapeError);
  EXPECT_THROW((void)m.forward(Tensor<float>({2, 784}), Mode::Eval, rng), ShapeError);
}

TEST(Model, EvalIsDeterministicTrainIsNot) {
  auto m = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::Swish));
  const auto x = test::random_tensor<float>({4, 1, 28, 28}, 2, 0.0, 1.0);
  std::mt19937_64 r1(1), r2(2);
  EXPECT_EQ(m.forward(x, Mode::Eval, r1).value(), m.forward(x, Mode::Eval, r2).value());
  EXPECT_NE(m.forward(x, Mode::Train, r1).value(), m.forward(x, Mode::Train, r2).value());
}

TEST(Model, ReducesToXTanhXNetwork) {
  auto m = build_model<double>(spec_for(Architecture::Mnist, ActivationKind::Tangma, 3));
  const auto x = test::random_tensor({1, 1, 28, 28}, 4, 0.0, 1.0);
  std::mt19937_64 unused(0);
  const auto logits = m.forward(x, Mode::Eval, unused).value();

  std::vector<double> h(x.data().begin(), x.data().end());
  h = ref_conv(h, 1, 28, values(m.parameter("conv1.weight")), values(m.parameter("conv1.bias")), 32, 3);
  xtanhx(h);
  h = ref_conv(h, 32, 26, values(m.parameter("conv2.weight")), values(m.parameter("conv2.bias")), 64, 3);
  xtanhx(h);
  std::vector<double> pooled(64 * 12 * 12);
  for (std::size_t c = 0; c < 64; ++c)
    for (std::size_t y = 0; y < 12; ++y)
      for (std::size_t xx = 0; xx < 12; ++xx) {
        const double* p = &h[(c * 24 + 2 * y) * 24 + 2 * xx];
        pooled[(c * 12 + y) * 12 + xx] = std::max({p[0], p[1], p[24], p[25]});
      }
  const auto dense = [](const std::vector<double>& in, const std::vector<double>& w, const std::vector<double>& b) {
    std::vector<double> out(b);
    for (std::size_t o = 0; o < b.size(); ++o)
      for (std::size_t i = 0; i < in.size(); ++i) out[o] += w[o * in.size() + i] * in[i];
    return out;
  };
  auto f = dense(pooled, values(m.parameter("fc1.weight")), values(m.parameter("fc1.bias")));
  xtanhx(f);
  const auto expect = dense(f, values(m.parameter("fc2.weight")), values(m.parameter("fc2.bias")));
  for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(logits[k], expect[k], 1e-12);
}

TEST(Model, CastPreservesValues) {
  const auto f = build_model<float>(spec_for(Architecture::Cifar10, ActivationKind::Tangma, 9));
  const auto d = f.cast<double>();
  EXPECT_EQ(d.parameter("conv3.weight").value(), f.parameter("conv3.weight").value().cast<double>());
}

TEST(Checkpoint, RoundTrip) {
  auto m = build_model<float>(spec_for(Architecture::Mnist, ActivationKind::Tangma, 11));
  auto alpha = m.parameter("tangma.alpha");
  alpha.mutable_value()[0] = 0.2805f;
  const fs::path p = fs::temp_directory_path() / "tangma_model_test.ckpt";
  save_checkpoint(p, m);

  auto back = load_checkpoint(p);
  EXPECT_EQ(back.spec().architecture, Architecture::Mnist);
  EXPECT_EQ(back.spec().activation, ActivationKind::Tangma);
  ASSERT_EQ(back.named_parameters().size(), m.named_parameters().size());
  for (std::size_t i = 0; i < m.named_parameters().size(); ++i) {
    EXPECT_EQ(back.named_parameters()[i].name, m.named_parameters()[i].name);
    EXPECT_EQ(back.named_parameters()[i].var.value(), m.named_parameters()[i].var.value());
  }
  const auto x = test::random_tensor<float>({2, 1, 28, 28}, 12, 0.0, 1.0);
  std::mt19937_64 rng(0);
  EXPECT_EQ(back.forward(x, Mode::Eval, rng).value(), m.forward(x, Mode::Eval, rng).value());

  std::ifstream in(p, std::ios::binary);
  char head[12];
  in.read(head, 12);
  EXPECT_EQ(std::string(head, 8), "TANGMACK");
  EXPECT_EQ(head[8], 1);
  EXPECT_EQ(head[9] | head[10] | head[11], 0);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path p = fs::temp_directory_path() / "tangma_bad.ckpt";
  std::ofstream(p, std::ios::binary) << "NOTACHECKPOINT";
  EXPECT_THROW((void)load_checkpoint(p), CheckpointError);

  auto m = build_model<float>(spec_for(Architecture::Cifar10, ActivationKind::ReLU));
  save_checkpoint(p, m);
  const auto full = fs::file_size(p);
  fs::resize_file(p, full / 2);
  EXPECT_THROW((void)load_checkpoint(p), CheckpointError);
  EXPECT_THROW((void)load_checkpoint(fs::temp_directory_path() / "tangma_missing.ckpt"), CheckpointError);
}

TEST(Model, EndToEndGradientCheck) {
  GradientSuiteOptions opt;
  opt.instances = 1;
  int checked = 0;
  for (const auto& r : run_gradient_suite(opt)) {
    if (r.name.rfind("model.", 0) != 0) continue;
    ++checked;
    EXPECT_LT(r.max_error, 1e-4) << r.name;
    EXPECT_GE(r.instances, 50u) << r.name;
  }
  EXPECT_EQ(checked, 2);
}
