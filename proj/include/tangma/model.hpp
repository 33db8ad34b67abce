#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tangma/activations.hpp"
#include "tangma/autodiff.hpp"
#include "tangma/layers.hpp"
#include "tangma/ops.hpp"
#include "tangma/tensor.hpp"

namespace tangma {

enum class Architecture { Mnist, Cifar10 };

inline std::string to_string(Architecture arch) { return arch == Architecture::Mnist ? "mnist" : "cifar10"; }

inline std::optional<Architecture> parse_architecture(std::string_view name) {
  if (name == "mnist") return Architecture::Mnist;
  if (name == "cifar10") return Architecture::Cifar10;
  return std::nullopt;
}

struct ModelSpec {
  Architecture architecture = Architecture::Mnist;
  ActivationKind activation = ActivationKind::Tangma;
  double conv_dropout = 0.25;  // MNIST only, after the pooling stage
  double fc_dropout = 0.5;
  std::uint64_t init_seed = 0;
  // One (alpha, gamma) pair for the whole network; false gives each
  // activation site its own pair.
  bool shared_tangma_params = true;
};

struct LayerSpec {
  enum class Kind { Conv, Activation, MaxPool, Dropout, Flatten, Linear };
  Kind kind;
  std::string name;
  std::size_t in = 0, out = 0;  // channels for Conv, features for Linear
  std::size_t kernel = 0, stride = 1, padding = 0;
  double p = 0.0;  // Dropout
};

/// The layer chain of each architecture.
inline std::vector<LayerSpec> layer_table(const ModelSpec& spec) {
  using K = LayerSpec::Kind;
  if (spec.architecture == Architecture::Mnist) {
    return {
        {K::Conv, "conv1", 1, 32, 3, 1, 0},     {K::Activation, "act1"},
        {K::Conv, "conv2", 32, 64, 3, 1, 0},    {K::Activation, "act2"},
        {K::MaxPool, "pool", 0, 0, 2, 2},       {K::Dropout, "drop1", 0, 0, 0, 1, 0, spec.conv_dropout},
        {K::Flatten, "flatten"},                {K::Linear, "fc1", 9216, 128},
        {K::Activation, "act3"},                {K::Dropout, "drop2", 0, 0, 0, 1, 0, spec.fc_dropout},
        {K::Linear, "fc2", 128, 10},
    };
  }
  return {
      {K::Conv, "conv1", 3, 32, 3, 1, 1},   {K::Activation, "act1"}, {K::MaxPool, "pool1", 0, 0, 2, 2},
      {K::Conv, "conv2", 32, 64, 3, 1, 1},  {K::Activation, "act2"}, {K::MaxPool, "pool2", 0, 0, 2, 2},
      {K::Conv, "conv3", 64, 128, 3, 1, 1}, {K::Activation, "act3"}, {K::MaxPool, "pool3", 0, 0, 2, 2},
      {K::Flatten, "flatten"},              {K::Linear, "fc1", 2048, 512},
      {K::Activation, "act4"},              {K::Dropout, "drop", 0, 0, 0, 1, 0, spec.fc_dropout},
      {K::Linear, "fc2", 512, 10},
  };
}

inline Shape input_shape(Architecture arch) {
  return arch == Architecture::Mnist ? Shape{1, 28, 28} : Shape{3, 32, 32};
}

template <typename T>
class Model {
 public:
  struct NamedParameter {
    std::string name;
    Var<T> var;
  };

  explicit Model(ModelSpec spec) : spec_(spec), layers_(layer_table(spec)) {
    std::mt19937_64 rng(spec.init_seed);
    const auto init = [&](Shape shape, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Tensor<T> t(std::move(shape));
      for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
      return Var<T>::parameter(std::move(t));
    };
    std::size_t act_sites = 0;
    for (const auto& layer : layers_) {
      if (layer.kind == LayerSpec::Kind::Conv) {
        const std::size_t fan_in = layer.in * layer.kernel * layer.kernel;
        params_.push_back({layer.name + ".weight", init({layer.out, layer.in, layer.kernel, layer.kernel}, fan_in)});
        params_.push_back({layer.name + ".bias", init({layer.out}, fan_in)});
      } else if (layer.kind == LayerSpec::Kind::Linear) {
        params_.push_back({layer.name + ".weight", init({layer.out, layer.in}, layer.in)});
        params_.push_back({layer.name + ".bias", init({layer.out}, layer.in)});
      } else if (layer.kind == LayerSpec::Kind::Activation) {
        ++act_sites;
      }
    }
    if (spec.activation == ActivationKind::Tangma) {
      const std::size_t pairs = spec.shared_tangma_params ? 1 : act_sites;
      for (std::size_t i = 0; i < pairs; ++i) {
        tangma_.emplace_back();
        const std::string prefix = spec.shared_tangma_params ? "tangma" : "tangma" + std::to_string(i + 1);
        params_.push_back({prefix + ".alpha", tangma_.back().alpha});
        params_.push_back({prefix + ".gamma", tangma_.back().gamma});
      }
    }
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<NamedParameter>& named_parameters() const noexcept { return params_; }

  std::vector<Var<T>> parameters() const {
    std::vector<Var<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.var);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.numel();
    return n;
  }

  Var<T> parameter(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.var;
    throw std::out_of_range("no parameter named " + std::string(name));
  }

  /// Tangma (alpha, gamma) pairs: one when shared, else one per site.
  const std::vector<TangmaParams<T>>& tangma_params() const noexcept { return tangma_; }

  /// Logits [B x 10]. Dropout is active only in Mode::Train.
  template <typename Rng>
  Var<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) {
    Shape expected = input_shape(spec_.architecture);
    if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != expected) {
      expected.insert(expected.begin(), x.rank() ? x.dim(0) : 0);
      throw ShapeError("forward: input " + to_string(x.shape()) + " does not match " + to_string(spec_.architecture) +
                       " input " + to_string(expected));
    }
    stage_shapes_.clear();
    Var<T> h = Var<T>::constant(x);
    std::size_t param = 0, act_site = 0;
    for (const auto& layer : layers_) {
      switch (layer.kind) {
        case LayerSpec::Kind::Conv: {
          ConvSpec<T> conv{layer.in, layer.out, layer.kernel, layer.stride, layer.padding, params_[param].var,
                           params_[param + 1].var};
          param += 2;
          h = conv2d(h, conv);
          break;
        }
        case LayerSpec::Kind::Linear:
          h = linear(h, params_[param].var, params_[param + 1].var);
          param += 2;
          break;
        case LayerSpec::Kind::Activation: {
          const TangmaParams<T>* tp = nullptr;
          if (!tangma_.empty()) tp = &tangma_[spec_.shared_tangma_params ? 0 : act_site];
          h = activate(spec_.activation, h, tp);
          ++act_site;
          break;
        }
        case LayerSpec::Kind::MaxPool:
          h = maxpool2d(h, layer.kernel, layer.stride);
          break;
        case LayerSpec::Kind::Dropout:
          h = dropout(h, DropoutSpec{layer.p, mode}, rng);
          break;
        case LayerSpec::Kind::Flatten:
          h = flatten(h);
          break;
      }
      stage_shapes_.emplace_back(layer.name, h.shape());
    }
    return h;
  }

  /// Output shape after each layer of the most recent forward().
  const std::vector<std::pair<std::string, Shape>>& stage_shapes() const noexcept { return stage_shapes_; }

  /// Same architecture and parameter values in another precision.
  template <typename U>
  Model<U> cast() const {
    Model<U> other(spec_);
    const auto& dst = other.named_parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto to = dst[i].var;
      const auto from = params_[i].var.value().data();
      auto values = to.mutable_value();
      for (std::size_t j = 0; j < values.size(); ++j) values[j] = static_cast<U>(from[j]);
    }
    return other;
  }

 private:
  ModelSpec spec_;
  std::vector<LayerSpec> layers_;
  std::vector<NamedParameter> params_;
  std::vector<TangmaParams<T>> tangma_;
  std::vector<std::pair<std::string, Shape>> stage_shapes_;
};

template <typename T>
Model<T> build_model(const ModelSpec& spec) {
  return Model<T>(spec);
}

// ---------------------------------------------------------------------------
// Checkpoint files
//
// All integers are little-endian uint32, all values little-endian IEEE-754
// binary32:
//
//   magic        8 bytes  "TANGMACK"
//   version      u32      1
//   architecture u32 length + ASCII ("mnist" | "cifar10")
//   activation   u32 length + ASCII ("relu" | "swish" | "gelu" | "tangma")
//   shared       u32      1 if one (alpha, gamma) pair is shared network-wide
//   count        u32      number of parameter entries
//   entries      count x { u32 name length, name, u32 rank, rank x u32 dims, f32 values }

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_string(std::ostream& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  if (n > 4096) throw CheckpointError("checkpoint string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw CheckpointError("checkpoint truncated");
  return s;
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'T', 'A', 'N', 'G', 'M', 'A', 'C', 'K'};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 8);
  detail::put_u32(out, 1);
  detail::put_string(out, to_string(model.spec().architecture));
  detail::put_string(out, to_string(model.spec().activation));
  detail::put_u32(out, model.spec().shared_tangma_params ? 1 : 0);
  detail::put_u32(out, static_cast<std::uint32_t>(model.named_parameters().size()));
  for (const auto& p : model.named_parameters()) {
    detail::put_string(out, p.name);
    detail::put_u32(out, static_cast<std::uint32_t>(p.var.shape().size()));
    for (auto d : p.var.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (T v : p.var.value().data()) detail::put_f32(out, static_cast<float>(v));
  }
  if (!out) throw CheckpointError("error writing checkpoint " + path.string());
}

template <typename T = float>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw CheckpointError(path.string() + " is not a tangma checkpoint");
  }
  if (const auto version = detail::get_u32(in); version != 1) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelSpec spec;
  const auto arch = parse_architecture(detail::get_string(in));
  const auto act = parse_activation(detail::get_string(in));
  if (!arch || !act) throw CheckpointError(path.string() + ": unknown architecture or activation");
  spec.architecture = *arch;
  spec.activation = *act;
  spec.shared_tangma_params = detail::get_u32(in) != 0;
  Model<T> model(spec);
  const std::uint32_t count = detail::get_u32(in);
  if (count != model.named_parameters().size()) {
    throw CheckpointError(path.string() + ": " + std::to_string(count) + " parameters, model has " +
                          std::to_string(model.named_parameters().size()));
  }
  for (const auto& p : model.named_parameters()) {
    const std::string name = detail::get_string(in);
    if (name != p.name) throw CheckpointError(path.string() + ": expected parameter " + p.name + ", found " + name);
    const std::uint32_t rank = detail::get_u32(in);
    if (rank > 8) throw CheckpointError(path.string() + ": " + name + " has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u32(in);
    if (shape != p.var.shape()) {
      throw CheckpointError(path.string() + ": " + name + " has shape " + to_string(shape) + ", expected " +
                            to_string(p.var.shape()));
    }
    auto var = p.var;
    for (auto& v : var.mutable_value()) v = static_cast<T>(detail::get_f32(in));
  }
  return model;
}

}  // namespace tangma
