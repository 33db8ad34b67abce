#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tangma/adam.hpp"
#include "tangma/data.hpp"
#include "tangma/layers.hpp"
#include "tangma/loss.hpp"
#include "tangma/ops.hpp"

using namespace tangma;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = TANGMA_TEST_DATA_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tangma_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string zeros_row(int label, std::size_t fields = 784) {
  std::string s = std::to_string(label);
  for (std::size_t i = 0; i < fields; ++i) s += ",0";
  return s + "\n";
}

// N samples of shape 1x1x1 labelled i % 10
Dataset tiny(std::size_t n) {
  Dataset d{Tensor<float>({n, 1, 1, 1}), std::vector<int>(n), "tiny"};
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = static_cast<int>(i % 10);
    d.images.mutable_data()[i] = static_cast<float>(i);
  }
  return d;
}

std::string load_error(const fs::path& p) {
  try {
    (void)load_mnist_csv(p);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(MnistCsv, FixtureRoundTripsExactly) {
  const Dataset d = load_mnist_csv(kFixtures / "mnist_3rows.csv");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.images.shape(), (Shape{3, 1, 28, 28}));
  EXPECT_EQ(d.labels, (std::vector<int>{5, 0, 9}));
  const auto px = d.images.data();
  for (std::size_t i = 0; i < 784; ++i) {
    EXPECT_EQ(px[i], 0.0f);
    const int k = static_cast<int>(i % 256);
    EXPECT_EQ(px[784 + i], static_cast<float>(k) / 255.0f);
    EXPECT_NEAR(px[784 + i], k / 255.0, 3e-8);
    EXPECT_EQ(px[2 * 784 + i], 1.0f);
  }
}

TEST(MnistCsv, HeaderToleratedAndWriterInverts) {
  const Dataset d = load_mnist_csv(kFixtures / "mnist_3rows.csv");
  const auto with_header = scratch("with_header.csv");
  write_mnist_csv(with_header, d, true);
  const Dataset back = load_mnist_csv(with_header);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.images, d.images);
  const auto bare = scratch("bare.csv");
  write_mnist_csv(bare, d, false);
  EXPECT_EQ(load_mnist_csv(bare).images, d.images);
}

TEST(MnistCsv, ValuesInUnitInterval) {
  const Dataset d = load_mnist_csv(kFixtures / "mnist_3rows.csv");
  for (float v : d.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(MnistCsv, ErrorsCarryLineNumbers) {
  const auto p = scratch("bad.csv");

  write_text(p, zeros_row(1) + zeros_row(2, 783));
  std::string msg = load_error(p);
  EXPECT_NE(msg.find("bad.csv:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("785"), std::string::npos) << msg;

  write_text(p, "label,a\n" + zeros_row(1) + zeros_row(3) + "4,x\n");
  msg = load_error(p);
  EXPECT_NE(msg.find("bad.csv:4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("not an integer"), std::string::npos) << msg;

  std::string row = zeros_row(7);
  row.replace(row.find(",0"), 2, ",256");
  write_text(p, row);
  msg = load_error(p);
  EXPECT_NE(msg.find("bad.csv:1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("outside [0, 255]"), std::string::npos) << msg;

  write_text(p, zeros_row(10));
  EXPECT_NE(load_error(p).find("label 10"), std::string::npos);

  write_text(p, zeros_row(1, 785));
  EXPECT_NE(load_error(p).find("more than 785"), std::string::npos);

  EXPECT_THROW((void)load_mnist_csv(scratch("missing.csv")), DataError);
}

TEST(Cifar, FixtureParses) {
  const Dataset d = load_cifar10_binary(kFixtures / "cifar_2records.bin");
  ASSERT_EQ(d.images.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(d.labels, (std::vector<int>{9, 0}));
  const auto px = d.images.data();
  EXPECT_EQ(px[0], 1.0f);                           // R byte 255
  EXPECT_EQ(px[1024], -1.0f);                       // G byte 0
  EXPECT_NEAR(px[2048], 0.0039215686274509803922, 1e-7);  // B byte 128
  for (float v : d.images.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (std::size_t i = 0; i < 3072; ++i) EXPECT_EQ(px[3072 + i], cifar_normalize(static_cast<std::uint8_t>(i % 256)));
}

TEST(Cifar, DirectoryPoolsAllBatchesAndRejectsBadSizes) {
  const fs::path dir = scratch("cifar_dir");
  fs::create_directories(dir);
  for (const char* name : {"data_batch_1.bin", "test_batch.bin"})
    fs::copy_file(kFixtures / "cifar_2records.bin", dir / name, fs::copy_options::overwrite_existing);
  const Dataset pooled = load_cifar10_binary(dir);
  EXPECT_EQ(pooled.size(), 4u);
  EXPECT_EQ(pooled.labels, (std::vector<int>{9, 0, 9, 0}));

  const fs::path bad = scratch("short.bin");
  write_text(bad, std::string(3072, '\0'));
  EXPECT_THROW((void)load_cifar10_binary(bad), DataError);
  const fs::path empty_dir = scratch("cifar_empty");
  fs::create_directories(empty_dir);
  EXPECT_THROW((void)load_cifar10_binary(empty_dir), DataError);
}

TEST(Cifar, WriterInvertsLoader) {
  const Dataset d = load_cifar10_binary(kFixtures / "cifar_2records.bin");
  const auto p = scratch("rt.bin");
  write_cifar10_binary(p, d);
  const Dataset back = load_cifar10_binary(p);
  EXPECT_EQ(back.images, d.images);
  EXPECT_EQ(back.labels, d.labels);
}

TEST(Split, PaperSizes) {
  const Dataset pool = tiny(60000);
  const auto [tr8, va8] = split(pool, SplitSpec{0.8, 1});
  EXPECT_EQ(tr8.size(), 48000u);
  EXPECT_EQ(va8.size(), 12000u);
  const auto [tr9, va9] = split(pool, SplitSpec{0.9, 1});
  EXPECT_EQ(tr9.size(), 54000u);
  EXPECT_EQ(va9.size(), 6000u);
}

TEST(Split, IsSeededPartition) {
  const Dataset pool = tiny(1000);
  const auto [a_tr, a_va] = split(pool, SplitSpec{0.8, 7});
  const auto [b_tr, b_va] = split(pool, SplitSpec{0.8, 7});
  EXPECT_EQ(a_tr.images, b_tr.images);
  EXPECT_EQ(a_va.images, b_va.images);

  std::vector<float> seen(a_tr.images.data().begin(), a_tr.images.data().end());
  seen.insert(seen.end(), a_va.images.data().begin(), a_va.images.data().end());
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(seen[i], static_cast<float>(i));

  const auto [c_tr, c_va] = split(pool, SplitSpec{0.8, 8});
  EXPECT_NE(a_tr.images, c_tr.images);
  EXPECT_THROW((void)split(pool, SplitSpec{1.0, 1}), std::invalid_argument);
}

TEST(Subset, SeededDraw) {
  const Dataset pool = tiny(500);
  const Dataset a = subset(pool, 64, 3), b = subset(pool, 64, 3);
  EXPECT_EQ(a.size(), 64u);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(subset(pool, 10000, 3).size(), 500u);
}

TEST(Batches, CountsAndRemainder) {
  const Dataset d48 = tiny(48000);
  const auto p64 = batches(d48, 64, true, 1, 1);
  EXPECT_EQ(p64.size(), 750u);
  for (std::size_t b = 0; b < p64.size(); ++b) ASSERT_EQ(p64.indices(b).size(), 64u);

  const Dataset d54 = tiny(54000);
  const auto p128 = batches(d54, 128, true, 1, 1);
  ASSERT_EQ(p128.size(), 422u);
  for (std::size_t b = 0; b < 421; ++b) ASSERT_EQ(p128.indices(b).size(), 128u);
  EXPECT_EQ(p128.indices(421).size(), 112u);
  EXPECT_EQ(p128[421].images.shape(), (Shape{112, 1, 1, 1}));
  EXPECT_THROW((void)batches(d54, 0, false, 0, 0), std::invalid_argument);
}

TEST(Batches, EpochVisitsEverySampleOnce) {
  const Dataset d = tiny(1000);
  for (std::uint64_t epoch = 1; epoch <= 3; ++epoch) {
    const auto plan = batches(d, 64, true, 9, epoch);
    std::vector<std::size_t> seen;
    std::map<int, int> label_count;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto idx = plan.indices(b);
      seen.insert(seen.end(), idx.begin(), idx.end());
      for (int y : plan[b].labels) ++label_count[y];
    }
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < seen.size(); ++i) ASSERT_EQ(seen[i], i);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(label_count[k], 100);
  }
}

TEST(Batches, ShuffleDependsOnSeedAndEpoch) {
  const Dataset d = tiny(200);
  const auto first = [&](std::uint64_t seed, std::uint64_t epoch) {
    const auto plan = batches(d, 50, true, seed, epoch);
    const auto idx = plan.indices(0);
    return std::vector<std::size_t>(idx.begin(), idx.end());
  };
  EXPECT_EQ(first(1, 1), first(1, 1));
  EXPECT_NE(first(1, 1), first(1, 2));
  EXPECT_NE(first(1, 1), first(2, 1));

  const auto stored = batches(d, 50, false, 1, 1);
  for (std::size_t b = 0; b < stored.size(); ++b)
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(stored.indices(b)[i], b * 50 + i);
}

TEST(Synthetic, EmptyAndDeterministic) {
  const Dataset empty = synthetic_dataset(0, 1);
  EXPECT_EQ(empty.size(), 0u);
  EXPECT_EQ(empty.images.shape(), (Shape{0, 1, 28, 28}));
  EXPECT_EQ(synthetic_dataset(50, 4).images, synthetic_dataset(50, 4).images);
  EXPECT_NE(synthetic_dataset(50, 4).images, synthetic_dataset(50, 5).images);

  const Dataset c = synthetic_dataset(20, 6, SyntheticShape::CifarLike);
  EXPECT_EQ(c.images.shape(), (Shape{20, 3, 32, 32}));
  for (float v : c.images.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (float v : synthetic_dataset(20, 6).images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Synthetic, LinearlySeparable) {
  // softmax regression on raw pixels, full batch
  const Dataset d = synthetic_dataset(1000, 11);
  const auto x = Var<float>::constant(d.images.reshape({1000, 784}));
  auto w = Var<float>::parameter(Tensor<float>({10, 784}));
  auto b = Var<float>::parameter(Tensor<float>({10}));
  Adam<float> opt({w, b}, AdamConfig{0.01});
  for (int step = 0; step < 150; ++step) {
    opt.zero_grad();
    backward(cross_entropy(linear(x, w, b), d.labels));
    opt.step();
  }
  const auto pred = predict(linear(x, w, b).value());
  EXPECT_GT(accuracy(pred, d.labels), 0.9);
}
