#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spectral_gain/dataset.hpp"
#include "spectral_gain/network.hpp"
#include "spectral_gain/spectral.hpp"

namespace spectral_gain {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 100;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::string dataset = "mnist";
  std::string architecture = "lenet-mnist";
  std::size_t train_limit = 0;  // 0 keeps the whole training split
  ProbeConfig probe;

  // learning_rate > 0, epochs >= 1, batch_size >= 1, momentum in [0, 1),
  // weight_decay >= 0. Throws ConfigError.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_err = 0.0;
  double val_loss = 0.0;
  double val_err = 0.0;
  double max_gain_db = 0.0;
  std::string snapshot_path;  // relative to the run directory; empty if diverged
};

struct GainCurve {
  TrainConfig config;
  std::vector<EpochRecord> records;  // epochs 1, 2, ... without gaps
  bool diverged = false;

  std::vector<double> gains() const;
};

// Momentum buffers, one pair per layer, zero-initialized lazily.
struct SgdState {
  std::vector<Tensor> weight_velocity;
  std::vector<Tensor> bias_velocity;
};

struct SgdParams {
  double learning_rate = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

struct StepResult {
  double mean_loss = 0.0;
  std::size_t errors = 0;
};

// One update from the batch-averaged gradient:
//   v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v
// applied to every weight and bias tensor. Throws DivergenceError when the
// loss or any gradient entry is not finite, leaving net and state unchanged.
StepResult sgd_step(Network& net, SgdState& state, const Batch& batch,
                    const SgdParams& params);

struct Evaluation {
  double loss = 0.0;        // mean log loss
  double error_rate = 0.0;  // fraction misclassified
};

// Fixed chunking and summation order, so results are reproducible.
Evaluation evaluate(const Network& net, const Dataset& ds,
                    std::size_t chunk = 500);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs config.epochs epochs. After each: evaluates both splits, writes
// snapshots/epoch-NNN.snap, probes the preprocessed impulse image and
// appends a CSV row to metrics.csv in run_dir. A DivergenceError ends the
// run with a final row of NaN values and diverged set.
GainCurve train(const TrainConfig& config, const DatasetPair& data,
                const std::filesystem::path& run_dir,
                const EpochCallback& on_epoch = {});

// Untrained network for config with the training mean image attached.
Network initial_network(const TrainConfig& config, const Dataset& train_split);

inline constexpr const char* kMetricsFile = "metrics.csv";

// CSV text: '#'-prefixed key=value config lines, a header row, one row per
// record. Doubles use the shortest text that parses back exactly.
std::string format_metrics_csv(const GainCurve& curve);
void write_metrics_csv(const GainCurve& curve, const std::filesystem::path& path);

// Parses the rows back (config comments are ignored). Throws FormatError on
// a malformed header, wrong column count or non-numeric field.
std::vector<EpochRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace spectral_gain
