#include <CLI11.hpp>

#include <deque>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <iostream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "spectral_gain/error.hpp"

namespace {

using namespace spectral_gain;
using namespace spectral_gain::cli;

// Raw flag values applied on top of the config file through the same
// key=value setter, so flags and files validate identically.
struct ConfigFlags {
  std::optional<std::string> config_file;
  std::deque<std::pair<std::string, std::optional<std::string>>> values;  // stable slots

  std::optional<std::string>& slot(const std::string& key) {
    values.emplace_back(key, std::nullopt);
    return values.back().second;
  }
};

void add_train_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_file, "key=value config file (flags override it)");
  cmd->add_option("--dataset-dir", f.slot("dataset_dir"),
                  "dataset root holding mnist/ or cifar-10-batches-bin/ "
                  "(default $SPECTRAL_GAIN_DATA)");
  cmd->add_option("--dataset", f.slot("dataset"), "mnist or cifar10 (default from --arch)");
  cmd->add_option("--arch", f.slot("arch"), "lenet-mnist or lenet-cifar");
  cmd->add_option("--lr", f.slot("lr"), "learning rate");
  cmd->add_option("--epochs", f.slot("epochs"), "number of epochs");
  cmd->add_option("--seed", f.slot("seed"), "initialization and shuffling seed");
  cmd->add_option("--batch-size", f.slot("batch_size"), "minibatch size");
  cmd->add_option("--momentum", f.slot("momentum"), "SGD momentum");
  cmd->add_option("--weight-decay", f.slot("weight_decay"), "L2 weight decay");
  cmd->add_option("--train-limit", f.slot("train_limit"),
                  "use only the first N training images (0 = all)");
}

void add_probe_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--probe-window", f.slot("probe_window"), "Hann window: on or off");
  cmd->add_option("--norm-mode", f.slot("norm_mode"), "projection value: inv-score or score");
  cmd->add_option("--fft-padding", f.slot("fft_padding"), "pow2 or none");
}

void add_threshold_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--window", f.slot("diag_window"), "variability window W in epochs");
  cmd->add_option("--theta-low", f.slot("theta_low"), "low-variability threshold (dB)");
  cmd->add_option("--theta-high", f.slot("theta_high"), "high-variability threshold (dB)");
  cmd->add_option("--theta-rise", f.slot("theta_rise"), "rise threshold (dB/epoch)");
  cmd->add_option("--rho", f.slot("rho"), "overfit variability ratio");
  cmd->add_option("--epsilon", f.slot("epsilon"), "overfit variability offset (dB)");
}

RunConfig resolve(const ConfigFlags& f) {
  RunConfig config;
  if (f.config_file) config = load_config_file(*f.config_file);
  bool dataset_given = false;
  std::optional<std::string> arch;
  for (const auto& [key, value] : f.values) {
    if (!value) continue;
    apply_config_value(config, key, *value);
    dataset_given = dataset_given || key == "dataset";
    if (key == "arch") arch = *value;
  }
  if (arch && !dataset_given) config.train.dataset = *arch == "lenet-cifar" ? "cifar10" : "mnist";
  return config;
}

// "2", "0.5" or a fraction such as "1/3".
double parse_multiplier(const std::string& text) {
  try {
    const auto slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } else {
      const std::string num = text.substr(0, slash);
      const std::string den = text.substr(slash + 1);
      std::size_t used_den = 0;
      const double n = std::stod(num, &used);
      const double d = std::stod(den, &used_den);
      if (used == num.size() && used_den == den.size() && d != 0.0) return n / d;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid multiplier '" + text + "'");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Spectral response of CNNs and Maximum Gain training diagnostics"};
  app.require_subcommand(1);

  ToyOptions toy;
  std::string toy_image;
  auto* toy_cmd = app.add_subcommand("toy", "Gaussian conv + relu toy network demo");
  toy_cmd->add_option("--image", toy_image, "binary PGM/PPM image (default: impulse)");
  toy_cmd->add_option("--size", toy.size, "impulse image extent")->capture_default_str();
  toy_cmd->add_option("--out-dir", toy.out_dir, "fresh output directory");

  ConfigFlags train_flags;
  std::filesystem::path train_out;
  auto* train_cmd = app.add_subcommand("train", "train a network and log per-epoch gain");
  add_train_flags(train_cmd, train_flags);
  add_probe_flags(train_cmd, train_flags);
  add_threshold_flags(train_cmd, train_flags);
  train_cmd->add_option("--out-dir", train_out, "fresh run directory");

  ConfigFlags sweep_flags;
  SweepOptions sweep;
  std::string multipliers = "1,2,3,4";
  std::string calibrate = "on";
  std::string calibrate_from;
  auto* sweep_cmd = app.add_subcommand("sweep", "learning-rate sweep and run comparison");
  add_train_flags(sweep_cmd, sweep_flags);
  add_probe_flags(sweep_cmd, sweep_flags);
  add_threshold_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--multipliers", multipliers, "comma-separated lr multipliers")
      ->capture_default_str();
  sweep_cmd->add_option("--calibrate", calibrate,
                        "calibrate thresholds from the x1 run: on or off")
      ->capture_default_str();
  sweep_cmd->add_option("--calibrate-from", calibrate_from, "baseline metrics CSV");
  sweep_cmd->add_option("--out-dir", sweep.out_dir, "fresh sweep directory");

  ConfigFlags probe_flags;
  ProbeOptions probe;
  auto* probe_cmd = app.add_subcommand("probe", "spectral response of a saved snapshot");
  probe_cmd->add_option("--snapshot", probe.snapshot, "snapshot file")->required();
  probe_cmd->add_option("--image", probe.image, "binary PGM/PPM image or 'impulse'")
      ->capture_default_str();
  add_probe_flags(probe_cmd, probe_flags);
  probe_cmd->add_option("--out-dir", probe.out_dir, "fresh output directory");

  ConfigFlags diag_flags;
  DiagnoseOptions diagnose;
  std::string diag_calibrate_from;
  auto* diag_cmd = app.add_subcommand("diagnose", "classify gain curves from metrics CSVs");
  diag_cmd->add_option("csv", diagnose.csv_paths, "metrics CSV files")->required();
  diag_cmd->add_option("--config", diag_flags.config_file, "key=value threshold config");
  add_threshold_flags(diag_cmd, diag_flags);
  diag_cmd->add_option("--calibrate-from", diag_calibrate_from, "baseline metrics CSV");
  diag_cmd->add_option("--out-dir", diagnose.out_dir, "fresh output directory");

  std::filesystem::path replay_manifest;
  std::filesystem::path replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", replay_manifest, "manifest.txt of an earlier run")
      ->required();
  replay_cmd->add_option("--out-dir", replay_out, "fresh output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*toy_cmd) {
    if (!toy_image.empty()) toy.image = toy_image;
    return run_toy(toy);
  }
  if (*train_cmd) return run_train({resolve(train_flags), train_out});
  if (*sweep_cmd) {
    sweep.config = resolve(sweep_flags);
    std::stringstream ms(multipliers);
    for (std::string m; std::getline(ms, m, ',');) {
      sweep.multipliers.push_back(parse_multiplier(m));
    }
    if (calibrate != "on" && calibrate != "off") {
      throw ConfigError("--calibrate must be on or off");
    }
    sweep.calibrate = calibrate == "on";
    if (!calibrate_from.empty()) sweep.calibrate_from = calibrate_from;
    return run_sweep(sweep);
  }
  if (*probe_cmd) {
    probe.probe = resolve(probe_flags).train.probe;
    return run_probe(probe);
  }
  if (*diag_cmd) {
    diagnose.thresholds = resolve(diag_flags).thresholds;
    if (!diag_calibrate_from.empty()) diagnose.calibrate_from = diag_calibrate_from;
    return run_diagnose(diagnose);
  }
  return run_replay(replay_manifest, replay_out);
}

// Activations are multi-megabyte and reallocated every minibatch. Keeping
// freed blocks on the heap instead of returning them to the kernel avoids
// page-faulting them in again on each allocation.
void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
}
