#pragma once

// Dataset ingestion: Kaggle-style MNIST CSV, CIFAR-10 binary batches, and a
// synthetic Gaussian-blob dataset used by tests and smoke runs.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tangma/tensor.hpp"

namespace tangma {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kNumClasses = 10;
inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kMnistPixels = kMnistSide * kMnistSide;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

struct Dataset {
  Tensor<float> images;  // [N x C x H x W]
  std::vector<int> labels;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t sample_size() const { return size() ? images.numel() / size() : numel(sample_shape()); }
  Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
};

/// Copies the listed samples, in order, into a new dataset.
inline Dataset select(const Dataset& d, std::span<const std::size_t> indices) {
  const std::size_t stride = d.sample_size();
  Shape shape = d.images.shape();
  shape[0] = indices.size();
  std::vector<float> pixels(indices.size() * stride);
  std::vector<int> labels(indices.size());
  const auto src = d.images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t j = indices[i];
    if (j >= d.size()) throw std::out_of_range("select: index " + std::to_string(j) + " beyond dataset size");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(j * stride), stride,
                pixels.begin() + static_cast<std::ptrdiff_t>(i * stride));
    labels[i] = d.labels[j];
  }
  return {Tensor<float>(std::move(shape), std::move(pixels)), std::move(labels), d.name};
}

// ---------------------------------------------------------------------------
// MNIST CSV: "label,p0,...,p783" per line, integers 0..255, optional header.

inline Dataset load_mnist_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open MNIST CSV " + path.string());
  std::vector<float> pixels;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& what) {
    return DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && !(line[0] >= '0' && line[0] <= '9')) continue;  // header

    const char* p = line.data();
    const char* end = p + line.size();
    int fields[1 + kMnistPixels];
    std::size_t count = 0;
    while (true) {
      if (count == 1 + kMnistPixels) throw fail("more than 785 fields");
      int value = 0;
      auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc() || next == p) throw fail("field " + std::to_string(count + 1) + " is not an integer");
      fields[count++] = value;
      p = next;
      if (p == end) break;
      if (*p != ',') throw fail("unexpected character after field " + std::to_string(count));
      ++p;
    }
    if (count != 1 + kMnistPixels) throw fail("expected 785 fields, found " + std::to_string(count));
    if (fields[0] < 0 || fields[0] >= static_cast<int>(kNumClasses)) {
      throw fail("label " + std::to_string(fields[0]) + " outside [0, 10)");
    }
    labels.push_back(fields[0]);
    for (std::size_t i = 1; i <= kMnistPixels; ++i) {
      if (fields[i] < 0 || fields[i] > 255) {
        throw fail("pixel " + std::to_string(i - 1) + " = " + std::to_string(fields[i]) + " outside [0, 255]");
      }
      pixels.push_back(static_cast<float>(fields[i]) / 255.0f);
    }
  }
  const std::size_t n = labels.size();
  return {Tensor<float>({n, 1, kMnistSide, kMnistSide}, std::move(pixels)), std::move(labels), "mnist"};
}

/// Writes pixel values back as round(255 x); the inverse of load_mnist_csv.
inline void write_mnist_csv(const std::filesystem::path& path, const Dataset& d, bool header = true) {
  if (d.sample_shape() != Shape{1, kMnistSide, kMnistSide}) throw DataError("write_mnist_csv: not a 1x28x28 dataset");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  if (header) {
    out << "label";
    for (std::size_t i = 0; i < kMnistPixels; ++i) out << ",pixel" << i;
    out << '\n';
  }
  const auto px = d.images.data();
  for (std::size_t n = 0; n < d.size(); ++n) {
    out << d.labels[n];
    for (std::size_t i = 0; i < kMnistPixels; ++i)
      out << ',' << static_cast<int>(std::lround(std::clamp(px[n * kMnistPixels + i], 0.0f, 1.0f) * 255.0f));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary: 3073-byte records (label, 1024 R, 1024 G, 1024 B).

inline float cifar_normalize(std::uint8_t byte) { return (static_cast<float>(byte) / 255.0f - 0.5f) / 0.5f; }

inline std::vector<std::filesystem::path> cifar10_batch_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                           "data_batch_5.bin", "test_batch.bin"}) {
    if (std::filesystem::exists(dir / name)) files.push_back(dir / name);
  }
  return files;
}

/// Loads one batch file, or every standard batch file (train and test pooled)
/// when given the extracted cifar-10-batches-bin directory.
inline Dataset load_cifar10_binary(const std::filesystem::path& source) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(source)) {
    files = cifar10_batch_files(source);
    if (files.empty()) throw DataError("no CIFAR-10 batch files (data_batch_N.bin, test_batch.bin) in " + source.string());
  } else {
    files.push_back(source);
  }
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open CIFAR-10 batch " + file.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw DataError(file.string() + ": size " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                      std::to_string(kCifarRecord) + "-byte records");
    }
    const std::size_t records = bytes.size() / kCifarRecord;
    pixels.reserve(pixels.size() + records * 3 * kCifarPlane);
    for (std::size_t r = 0; r < records; ++r) {
      const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data() + r * kCifarRecord);
      if (rec[0] >= kNumClasses) {
        throw DataError(file.string() + ": record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
      }
      labels.push_back(rec[0]);
      for (std::size_t i = 1; i < kCifarRecord; ++i) pixels.push_back(cifar_normalize(rec[i]));
    }
  }
  const std::size_t n = labels.size();
  return {Tensor<float>({n, 3, kCifarSide, kCifarSide}, std::move(pixels)), std::move(labels), "cifar10"};
}

/// Inverse of the loader's normalization, quantized to bytes.
inline void write_cifar10_binary(const std::filesystem::path& path, const Dataset& d) {
  if (d.sample_shape() != Shape{3, kCifarSide, kCifarSide}) throw DataError("write_cifar10_binary: not a 3x32x32 dataset");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto px = d.images.data();
  std::vector<char> record(kCifarRecord);
  for (std::size_t n = 0; n < d.size(); ++n) {
    record[0] = static_cast<char>(d.labels[n]);
    for (std::size_t i = 0; i < 3 * kCifarPlane; ++i) {
      const float unit = std::clamp(px[n * 3 * kCifarPlane + i] * 0.5f + 0.5f, 0.0f, 1.0f);
      record[i + 1] = static_cast<char>(static_cast<std::uint8_t>(std::lround(unit * 255.0f)));
    }
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
}

// ---------------------------------------------------------------------------
// Splitting, subsetting, batching

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream = 0) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Seeded permutation; the first floor(N f) samples train, the rest validate.
inline std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("split: train fraction must lie in (0, 1)");
  }
  const auto order = seeded_permutation(d.size(), spec.seed, 0x5b117);
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(d.size()) * spec.train_fraction + 1e-9));
  const std::span<const std::size_t> all(order);
  return {select(d, all.first(n_train)), select(d, all.subspan(n_train))};
}

/// Seeded random draw of n samples (the whole set, reordered, if n >= size).
inline Dataset subset(const Dataset& d, std::size_t n, std::uint64_t seed) {
  auto order = seeded_permutation(d.size(), seed, 0x5ab5e7);
  order.resize(std::min(n, order.size()));
  return select(d, order);
}

struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
  std::size_t size() const noexcept { return labels.size(); }
};

/// One epoch's batch order. Every sample appears exactly once; the last
/// batch keeps the remainder. The shuffle is derived from (seed, epoch).
class BatchPlan {
 public:
  BatchPlan(const Dataset& data, std::size_t batch_size, bool shuffle, std::uint64_t seed, std::uint64_t epoch)
      : data_(&data), batch_size_(batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
    if (shuffle) {
      order_ = seeded_permutation(data.size(), seed, 0xe90c0000ULL + epoch);
    } else {
      order_.resize(data.size());
      std::iota(order_.begin(), order_.end(), std::size_t{0});
    }
  }

  std::size_t size() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

  std::span<const std::size_t> indices(std::size_t b) const {
    const std::size_t begin = b * batch_size_;
    return std::span<const std::size_t>(order_).subspan(begin, std::min(batch_size_, order_.size() - begin));
  }

  Batch operator[](std::size_t b) const {
    Dataset part = select(*data_, indices(b));
    return {std::move(part.images), std::move(part.labels)};
  }

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

inline BatchPlan batches(const Dataset& d, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                         std::uint64_t epoch) {
  return BatchPlan(d, batch_size, shuffle, seed, epoch);
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SyntheticShape { MnistLike, CifarLike };

/// Ten classes of Gaussian blobs: class k puts a blob at its own point on a
/// ring (CIFAR-like images also get a class-specific colour mix), with
/// per-sample centre jitter and pixel noise. Values are clamped to the same
/// ranges the real loaders produce.
inline Dataset synthetic_dataset(std::size_t n, std::uint64_t seed, SyntheticShape shape = SyntheticShape::MnistLike) {
  const bool cifar = shape == SyntheticShape::CifarLike;
  const std::size_t channels = cifar ? 3 : 1;
  const std::size_t side = cifar ? kCifarSide : kMnistSide;
  const double lo = cifar ? -1.0 : 0.0;
  const double radius = side * 0.28, sigma = side * 0.11, centre = (side - 1) / 2.0;

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x51u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> pick_class(0, static_cast<int>(kNumClasses) - 1);
  std::normal_distribution<double> jitter(0.0, 1.0), noise(0.0, 0.08);

  std::vector<float> pixels(n * channels * side * side);
  std::vector<int> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    const int k = pick_class(rng);
    labels[s] = k;
    const double angle = 2.0 * 3.14159265358979323846 * k / kNumClasses;
    const double cy = centre + radius * std::sin(angle) + jitter(rng);
    const double cx = centre + radius * std::cos(angle) + jitter(rng);
    for (std::size_t c = 0; c < channels; ++c) {
      const double weight = cifar ? 0.4 + 0.6 * ((k + c) % 3 == 0) : 1.0;
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          const double blob = weight * std::exp(-d2 / (2.0 * sigma * sigma));
          const double v = lo + (1.0 - lo) * blob + noise(rng);
          pixels[((s * channels + c) * side + y) * side + x] = static_cast<float>(std::clamp(v, lo, 1.0));
        }
      }
    }
  }
  return {Tensor<float>({n, channels, side, side}, std::move(pixels)), std::move(labels), "synthetic"};
}

}  // namespace tangma
