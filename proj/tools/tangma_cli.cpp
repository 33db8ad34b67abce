// tangma: train, evaluate, gradient-check and compare activation functions
// on the MNIST and CIFAR-10 convolutional models.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tangma/gradient_suite.hpp"
#include "tangma/harness.hpp"

namespace {

using namespace tangma;

const std::vector<std::string> kActivationNames{"relu", "swish", "gelu", "tangma"};
const std::vector<std::string> kDatasetNames{"mnist", "cifar10", "synthetic", "synthetic-cifar"};

struct RunFlags {
  std::string dataset = "mnist";
  std::string activation = "tangma";
  std::size_t epochs = 10;
  std::size_t batch_size = 0;  // 0: 64 for MNIST-shaped data, 128 for CIFAR-shaped
  double lr = 0.001;
  std::uint64_t seed = 42;
  double split = 0.0;  // 0: dataset default
  std::string mnist_csv, cifar_dir, out;
  std::vector<std::size_t> trace_batches;
  std::size_t subset = 0;
  std::size_t synthetic_size = 2000;
  bool quiet = false;

  RunConfig to_config() const {
    RunConfig cfg;
    cfg.dataset = *parse_dataset(dataset);
    cfg.activation = *parse_activation(activation);
    cfg.epochs = epochs;
    cfg.batch_size = batch_size ? batch_size : (architecture_for(cfg.dataset) == Architecture::Cifar10 ? 128 : 64);
    cfg.learning_rate = lr;
    cfg.seed = seed;
    if (split > 0.0) cfg.train_fraction = split;
    cfg.mnist_csv = mnist_csv;
    cfg.cifar_dir = cifar_dir;
    cfg.output_dir = out;
    cfg.trace_batches = trace_batches;
    if (subset) cfg.subset = subset;
    cfg.synthetic_size = synthetic_size;
    cfg.verbose = !quiet;
    return cfg;
  }
};

void add_data_flags(CLI::App& cmd, RunFlags& f) {
  cmd.add_option("--dataset", f.dataset, "mnist | cifar10 | synthetic | synthetic-cifar")
      ->check(CLI::IsMember(kDatasetNames));
  cmd.add_option("--mnist-csv", f.mnist_csv, "MNIST CSV (default: $TANGMA_DATA_DIR/mnist.csv)");
  cmd.add_option("--cifar-dir", f.cifar_dir,
                 "CIFAR-10 binary directory or batch file (default: $TANGMA_DATA_DIR/cifar-10-batches-bin)");
  cmd.add_option("--subset", f.subset, "draw this many samples from the pool before splitting");
  cmd.add_option("--synthetic-size", f.synthetic_size, "pool size of the synthetic datasets");
  cmd.add_option("--seed", f.seed, "seed for init, split, shuffling and dropout");
  cmd.add_option("--split", f.split, "train fraction (default 0.8 MNIST, 0.9 CIFAR-10)")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--batch-size", f.batch_size, "batch size (default 64 MNIST, 128 CIFAR-10)")
      ->check(CLI::PositiveNumber);
}

void add_run_flags(CLI::App& cmd, RunFlags& f) {
  add_data_flags(cmd, f);
  cmd.add_option("--epochs", f.epochs, "number of epochs")->check(CLI::PositiveNumber);
  cmd.add_option("--lr", f.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  cmd.add_option("--out", f.out, "output directory for metrics.csv, params.csv, model.ckpt");
  cmd.add_option("--trace-batches", f.trace_batches, "1-based batch indices at which alpha/gamma are logged")
      ->delimiter(',');
  cmd.add_flag("--quiet", f.quiet, "suppress per-epoch progress");
}

void print_epochs(const RunResult& run) {
  std::printf("epoch,train_loss,val_loss,val_accuracy,epoch_time_s\n");
  for (const auto& e : run.epochs)
    std::printf("%zu,%.4f,%.4f,%.4f,%.4f\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.epoch_time);
  if (!run.traces.empty()) {
    std::printf("\nepoch,batch,alpha,gamma\n");
    for (const auto& t : run.traces) std::printf("%zu,%zu,%.4f,%.4f\n", t.epoch, t.batch, t.alpha, t.gamma);
  }
}

int cmd_eval(const std::string& checkpoint, const RunFlags& f, const std::string& part) {
  auto model = load_checkpoint<float>(checkpoint);
  RunConfig cfg = f.to_config();
  if (architecture_for(cfg.dataset) != model.spec().architecture) {
    throw std::invalid_argument("checkpoint is a " + std::string(to_string(model.spec().architecture)) +
                                " model but --dataset is " + f.dataset);
  }
  Dataset data = load_dataset(cfg);
  if (part != "all") {
    auto [train, val] = split(data, SplitSpec{cfg.effective_train_fraction(), cfg.seed});
    data = part == "train" ? std::move(train) : std::move(val);
  }
  const EvalResult r = evaluate(model, data, cfg.batch_size);
  std::printf("samples,loss,accuracy\n%zu,%.4f,%.4f\n", data.size(), r.loss, r.accuracy);
  return 0;
}

int cmd_gradcheck(const GradientSuiteOptions& opt, double threshold) {
  const auto results = run_gradient_suite(opt);
  bool ok = true;
  std::printf("%-22s %9s %14s\n", "check", "instances", "max_rel_error");
  for (const auto& r : results) {
    const bool pass = r.max_error < threshold;
    ok = ok && pass;
    std::printf("%-22s %9zu %14.3e %s\n", r.name.c_str(), r.instances, r.max_error, pass ? "ok" : "FAIL");
  }
  std::printf("%s: every check %s %.0e\n", ok ? "PASS" : "FAIL", ok ? "below" : "must be below", threshold);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tangma activation training and benchmarking"};
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "train one model and write metrics.csv / params.csv / model.ckpt");
  add_run_flags(*train, train_flags);
  train->add_option("--activation", train_flags.activation, "relu | swish | gelu | tangma")
      ->check(CLI::IsMember(kActivationNames));

  RunFlags compare_flags;
  compare_flags.quiet = false;
  auto* compare = app.add_subcommand("compare", "train all four activations on one split and tabulate");
  add_run_flags(*compare, compare_flags);

  RunFlags eval_flags;
  std::string checkpoint, part = "all";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_data_flags(*eval, eval_flags);
  eval->add_option("--checkpoint", checkpoint, "model.ckpt written by train")->required()->check(CLI::ExistingFile);
  eval->add_option("--part", part, "all | train | val (split by --seed/--split)")
      ->check(CLI::IsMember({"all", "train", "val"}));

  GradientSuiteOptions gc_opt;
  double threshold = 1e-5;
  bool no_models = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op, layer and the loss");
  gradcheck->add_option("--instances", gc_opt.instances, "random instances per check")->check(CLI::PositiveNumber);
  gradcheck->add_option("--step", gc_opt.step, "central-difference step h");
  gradcheck->add_option("--model-step", gc_opt.model_step, "step for the end-to-end model checks");
  gradcheck->add_option("--seed", gc_opt.seed, "RNG seed");
  gradcheck->add_option("--threshold", threshold, "max relative error allowed");
  gradcheck->add_flag("--no-models", no_models, "skip the end-to-end model checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const RunResult run = train_run(train_flags.to_config());
      print_epochs(run);
      return 0;
    }
    if (*compare) {
      const auto rows = compare_activations(compare_flags.to_config());
      const std::string table = format_compare_table(rows);
      std::cout << table;
      if (!compare_flags.out.empty()) {
        std::ofstream(std::filesystem::path(compare_flags.out) / "compare.csv", std::ios::binary) << table;
      }
      return 0;
    }
    if (*eval) return cmd_eval(checkpoint, eval_flags, part);
    if (*gradcheck) {
      gc_opt.include_models = !no_models;
      return cmd_gradcheck(gc_opt, threshold);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
