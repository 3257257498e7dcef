#pragma once

// Subcommand implementations behind the spectral_gain executable. Each
// returns a process exit code and writes only under its output directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spectral_gain/config.hpp"

namespace spectral_gain::cli {

// Training wall time in seconds, written into every run directory.
inline constexpr const char* kElapsedFile = "elapsed_seconds.txt";

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct ToyOptions {
  std::optional<std::filesystem::path> image;
  std::size_t size = 32;  // impulse image extent when no image is given
  std::filesystem::path out_dir;
};

struct TrainOptions {
  RunConfig config;
  std::filesystem::path out_dir;
};

struct SweepOptions {
  RunConfig config;
  std::vector<double> multipliers;
  std::optional<std::filesystem::path> calibrate_from;  // baseline metrics CSV
  bool calibrate = true;  // calibrate from the x1 run when present
  std::filesystem::path out_dir;
};

struct ProbeOptions {
  std::filesystem::path snapshot;
  std::string image = "impulse";
  ProbeConfig probe;
  std::filesystem::path out_dir;
};

struct DiagnoseOptions {
  std::vector<std::filesystem::path> csv_paths;
  Thresholds thresholds;
  std::optional<std::filesystem::path> calibrate_from;
  std::filesystem::path out_dir;
};

int run_toy(const ToyOptions& options);
int run_train(const TrainOptions& options);
int run_sweep(const SweepOptions& options);
int run_probe(const ProbeOptions& options);
int run_diagnose(const DiagnoseOptions& options);

// Re-executes the command recorded in a manifest into a new directory.
int run_replay(const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

// `requested` when given (must not exist or be empty), else the first free
// runs/<stem>-NNN under the working directory. Creates the directory.
std::filesystem::path fresh_directory(const std::filesystem::path& requested,
                                      const std::string& stem);

// Dataset root from the config, then $SPECTRAL_GAIN_DATA. Throws IoError
// when neither is set.
std::filesystem::path resolve_dataset_dir(const RunConfig& config);

}  // namespace spectral_gain::cli
