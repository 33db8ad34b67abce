#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tangma/adam.hpp"
#include "tangma/data.hpp"
#include "tangma/loss.hpp"
#include "tangma/model.hpp"

namespace tangma {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { Mnist, Cifar10, Synthetic, SyntheticCifar };

inline std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Mnist:
      return "mnist";
    case DatasetKind::Cifar10:
      return "cifar10";
    case DatasetKind::Synthetic:
      return "synthetic";
    case DatasetKind::SyntheticCifar:
      return "synthetic-cifar";
  }
  return "unknown";
}

inline std::optional<DatasetKind> parse_dataset(std::string_view name) {
  for (auto kind : {DatasetKind::Mnist, DatasetKind::Cifar10, DatasetKind::Synthetic, DatasetKind::SyntheticCifar})
    if (to_string(kind) == name) return kind;
  return std::nullopt;
}

inline Architecture architecture_for(DatasetKind kind) {
  return kind == DatasetKind::Cifar10 || kind == DatasetKind::SyntheticCifar ? Architecture::Cifar10
                                                                             : Architecture::Mnist;
}

inline constexpr std::size_t kPaperTraceBatches[] = {130, 260};

struct RunConfig {
  DatasetKind dataset = DatasetKind::Mnist;
  ActivationKind activation = ActivationKind::Tangma;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  std::uint64_t seed = 42;
  std::optional<double> train_fraction;  // 0.8 for MNIST, 0.9 for CIFAR-10 when unset
  std::filesystem::path mnist_csv;
  std::filesystem::path cifar_dir;
  std::filesystem::path output_dir;          // no files written when empty
  std::vector<std::size_t> trace_batches;    // 1-based, ascending; empty selects the defaults
  std::optional<std::size_t> subset;         // pool size drawn before the split
  std::size_t synthetic_size = 2000;
  bool verbose = false;

  double effective_train_fraction() const {
    if (train_fraction) return *train_fraction;
    return architecture_for(dataset) == Architecture::Cifar10 ? 0.9 : 0.8;
  }

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    for (std::size_t i = 0; i < trace_batches.size(); ++i) {
      if (trace_batches[i] == 0) throw std::invalid_argument("trace batch indices are 1-based");
      if (i && trace_batches[i] <= trace_batches[i - 1])
        throw std::invalid_argument("trace batch indices must be strictly ascending");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // percent
  double epoch_time = 0.0;    // seconds, training + validation
};

struct ParamTraceRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;  // 1-based index within the epoch
  double alpha = 0.0;
  double gamma = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // percent
};

struct RunResult {
  std::vector<EpochRecord> epochs;
  std::vector<ParamTraceRecord> traces;
  std::vector<std::vector<double>> batch_losses;  // [epoch][batch]
  Model<float> model;
};

namespace detail {

inline std::filesystem::path data_dir_default(const char* leaf) {
  if (const char* dir = std::getenv("TANGMA_DATA_DIR")) return std::filesystem::path(dir) / leaf;
  return std::filesystem::path("data") / leaf;
}

inline void log_line(bool verbose, const std::string& msg) {
  if (verbose) std::clog << msg << '\n';
}

}  // namespace detail

/// Loads the configured dataset pool (before splitting), applying `subset`.
/// Unset paths fall back to $TANGMA_DATA_DIR/mnist.csv and
/// $TANGMA_DATA_DIR/cifar-10-batches-bin.
inline Dataset load_dataset(const RunConfig& cfg) {
  Dataset pool;
  switch (cfg.dataset) {
    case DatasetKind::Mnist:
      pool = load_mnist_csv(cfg.mnist_csv.empty() ? detail::data_dir_default("mnist.csv") : cfg.mnist_csv);
      break;
    case DatasetKind::Cifar10:
      pool = load_cifar10_binary(cfg.cifar_dir.empty() ? detail::data_dir_default("cifar-10-batches-bin")
                                                       : cfg.cifar_dir);
      break;
    case DatasetKind::Synthetic:
      pool = synthetic_dataset(cfg.synthetic_size, cfg.seed, SyntheticShape::MnistLike);
      break;
    case DatasetKind::SyntheticCifar:
      pool = synthetic_dataset(cfg.synthetic_size, cfg.seed, SyntheticShape::CifarLike);
      break;
  }
  if (cfg.subset) pool = subset(pool, *cfg.subset, cfg.seed);
  return pool;
}

/// Batch numbers at which alpha/gamma are sampled. The defaults are 130 and
/// 260; epochs too short for those fall back to the midpoint and last batch.
inline std::vector<std::size_t> trace_points(const RunConfig& cfg, std::size_t batches_per_epoch) {
  if (batches_per_epoch == 0) return {};
  if (!cfg.trace_batches.empty()) {
    std::vector<std::size_t> kept;
    for (auto b : cfg.trace_batches) {
      if (b <= batches_per_epoch) {
        kept.push_back(b);
      } else {
        detail::log_line(cfg.verbose, "trace batch " + std::to_string(b) + " skipped: epoch has only " +
                                          std::to_string(batches_per_epoch) + " batches");
      }
    }
    return kept;
  }
  if (batches_per_epoch >= kPaperTraceBatches[1]) return {kPaperTraceBatches[0], kPaperTraceBatches[1]};
  const std::size_t mid = (batches_per_epoch + 1) / 2;
  if (mid == batches_per_epoch) return {batches_per_epoch};
  return {mid, batches_per_epoch};
}

using LogitsFn = std::function<Tensor<float>(const Tensor<float>&)>;

/// Sample-weighted mean loss and percent accuracy over d.
inline EvalResult evaluate(const LogitsFn& logits_of, const Dataset& d, std::size_t batch_size) {
  if (d.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const auto plan = batches(d, batch_size, false, 0, 0);
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < plan.size(); ++b) {
    const Batch batch = plan[b];
    const Tensor<float> logits = logits_of(batch.images);
    const double batch_loss = cross_entropy(Var<float>::constant(logits), batch.labels).value().item();
    loss_sum += batch_loss * static_cast<double>(batch.size());
    const auto pred = predict(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == batch.labels[i];
  }
  const auto n = static_cast<double>(d.size());
  return {loss_sum / n, 100.0 * static_cast<double>(hits) / n};
}

/// Eval-mode pass of `model` over d.
inline EvalResult evaluate(Model<float>& model, const Dataset& d, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::mt19937_64 unused(0);
  return evaluate([&](const Tensor<float>& x) { return model.forward(x, Mode::Eval, unused).value(); }, d,
                  batch_size);
}

/// Trains one model on an already split dataset.
inline RunResult train_run(const RunConfig& cfg, const Dataset& train, const Dataset& val) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("train_run: empty train or validation set");
  ModelSpec spec;
  spec.architecture = architecture_for(cfg.dataset);
  spec.activation = cfg.activation;
  spec.init_seed = cfg.seed;
  RunResult result{{}, {}, {}, build_model<float>(spec)};
  Model<float>& model = result.model;
  if (train.sample_shape() != input_shape(spec.architecture)) {
    throw ShapeError("train_run: samples of shape " + to_string(train.sample_shape()) + " do not fit the " +
                     std::string(to_string(spec.architecture)) + " model");
  }

  Adam<float> optimizer(model.parameters(), AdamConfig{cfg.learning_rate});
  std::seed_seq dropout_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0xd80u};
  std::mt19937_64 dropout_rng(dropout_seed);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto plan = batches(train, cfg.batch_size, true, cfg.seed, epoch);
    const auto traces = model.tangma_params().empty() ? std::vector<std::size_t>{} : trace_points(cfg, plan.size());
    auto next_trace = traces.begin();
    auto& losses = result.batch_losses.emplace_back();
    losses.reserve(plan.size());

    for (std::size_t b = 0; b < plan.size(); ++b) {
      const Batch batch = plan[b];
      optimizer.zero_grad();
      const auto logits = model.forward(batch.images, Mode::Train, dropout_rng);
      const auto loss = cross_entropy(logits, batch.labels);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(b + 1) + " (" + std::string(to_string(cfg.activation)) +
                            ", lr " + std::to_string(cfg.learning_rate) + ")");
      }
      backward(loss);
      optimizer.step();
      losses.push_back(value);
      if (next_trace != traces.end() && *next_trace == b + 1) {
        const auto& tp = model.tangma_params().front();
        result.traces.push_back({epoch, b + 1, tp.alpha_value(), tp.gamma_value()});
        ++next_trace;
      }
    }

    const EvalResult eval = evaluate(model, val, cfg.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    double sum = 0.0;
    for (double l : losses) sum += l;
    rec.train_loss = sum / static_cast<double>(losses.size());
    rec.val_loss = eval.loss;
    rec.val_accuracy = eval.accuracy;
    rec.epoch_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(rec);

    char line[160];
    std::snprintf(line, sizeof line, "[%s] epoch %zu/%zu  train %.4f  val %.4f  acc %.2f%%  %.1fs",
                  std::string(to_string(cfg.activation)).c_str(), epoch, cfg.epochs, rec.train_loss, rec.val_loss,
                  rec.val_accuracy, rec.epoch_time);
    detail::log_line(cfg.verbose, line);
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV export: comma-separated, LF endings, fixed 4-decimal values.

inline std::string format_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline void export_metrics(const std::vector<EpochRecord>& records, const std::vector<ParamTraceRecord>& traces,
                           const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  const auto metrics_path = dir / "metrics.csv";
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  metrics << "epoch,train_loss,val_loss,val_accuracy,epoch_time_s\n";
  for (const auto& r : records) {
    metrics << r.epoch << ',' << format_fixed4(r.train_loss) << ',' << format_fixed4(r.val_loss) << ','
            << format_fixed4(r.val_accuracy) << ',' << format_fixed4(r.epoch_time) << '\n';
  }
  if (!metrics) throw std::runtime_error("error writing " + metrics_path.string());

  const auto params_path = dir / "params.csv";
  if (traces.empty()) {
    std::filesystem::remove(params_path, ec);
    return;
  }
  std::ofstream params(params_path, std::ios::binary);
  if (!params) throw std::runtime_error("cannot write " + params_path.string());
  params << "epoch,batch,alpha,gamma\n";
  for (const auto& t : traces) {
    params << t.epoch << ',' << t.batch << ',' << format_fixed4(t.alpha) << ',' << format_fixed4(t.gamma) << '\n';
  }
  if (!params) throw std::runtime_error("error writing " + params_path.string());
}

/// Loads, splits and trains per cfg, then exports if output_dir is set.
inline RunResult train_run(const RunConfig& cfg) {
  cfg.validate();
  const Dataset pool = load_dataset(cfg);
  auto [train, val] = split(pool, SplitSpec{cfg.effective_train_fraction(), cfg.seed});
  detail::log_line(cfg.verbose, "dataset " + std::string(to_string(cfg.dataset)) + ": " + std::to_string(train.size()) +
                                    " train / " + std::to_string(val.size()) + " val");
  RunResult result = train_run(cfg, train, val);
  if (!cfg.output_dir.empty()) {
    export_metrics(result.epochs, result.traces, cfg.output_dir);
    save_checkpoint(cfg.output_dir / "model.ckpt", result.model);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Four-way comparison

struct CompareRow {
  ActivationKind activation;
  double final_val_accuracy = 0.0;
  double final_val_loss = 0.0;
  double final_train_loss = 0.0;
  double avg_epoch_time = 0.0;
};

/// Trains every activation on the same split with the same seed. When
/// cfg.output_dir is set each run exports into <output_dir>/<activation>/.
inline std::vector<CompareRow> compare_activations(const RunConfig& base) {
  base.validate();
  const Dataset pool = load_dataset(base);
  auto [train, val] = split(pool, SplitSpec{base.effective_train_fraction(), base.seed});
  std::vector<CompareRow> rows;
  for (auto kind : kAllActivations) {
    RunConfig cfg = base;
    cfg.activation = kind;
    RunResult run = train_run(cfg, train, val);
    if (!base.output_dir.empty()) {
      const auto dir = base.output_dir / std::string(to_string(kind));
      export_metrics(run.epochs, run.traces, dir);
      save_checkpoint(dir / "model.ckpt", run.model);
    }
    CompareRow row{kind};
    row.final_val_accuracy = run.epochs.back().val_accuracy;
    row.final_val_loss = run.epochs.back().val_loss;
    row.final_train_loss = run.epochs.back().train_loss;
    for (const auto& e : run.epochs) row.avg_epoch_time += e.epoch_time;
    row.avg_epoch_time /= static_cast<double>(run.epochs.size());
    rows.push_back(row);
  }
  return rows;
}

inline std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::string out = "activation,final_val_accuracy,final_val_loss,final_train_loss,avg_epoch_time_s\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.activation)) + ',' + format_fixed4(r.final_val_accuracy) + ',' +
           format_fixed4(r.final_val_loss) + ',' + format_fixed4(r.final_train_loss) + ',' +
           format_fixed4(r.avg_epoch_time) + '\n';
  }
  return out;
}

}  // namespace tangma
