#pragma once

// key=value configuration text shared by config files, manifests and the
// comment header of metrics CSVs. Blank lines and lines starting with '#'
// are ignored; unknown keys are rejected.

#include <filesystem>
#include <string>
#include <string_view>

#include "spectral_gain/diagnostics.hpp"
#include "spectral_gain/training.hpp"

namespace spectral_gain {

struct RunConfig {
  TrainConfig train;
  Thresholds thresholds;
  std::filesystem::path dataset_dir;

  void validate() const;
};

// Shortest text that parses back to exactly `v` ("nan", "inf" for
// non-finite values).
std::string format_double(double v);

// Sets one key; throws ConfigError for unknown keys or unparsable values.
void apply_config_value(RunConfig& config, std::string_view key, std::string_view value);

// Applies every key=value line in `text` on top of `base`.
RunConfig parse_config_text(std::string_view text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

std::string format_train_config(const TrainConfig& config);
std::string format_run_config(const RunConfig& config);

}  // namespace spectral_gain
