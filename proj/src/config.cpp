#include "spectral_gain/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v)) {
    throw ConfigError("invalid number '" + std::string(value) + "' for " + std::string(key));
  }
  return v;
}

std::uint64_t to_unsigned(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("invalid non-negative integer '" + std::string(value) + "' for " +
                      std::string(key));
  }
  return v;
}

bool to_switch(std::string_view key, std::string_view value) {
  if (value == "on" || value == "true") return true;
  if (value == "off" || value == "false") return false;
  throw ConfigError("expected on or off for " + std::string(key) + ", got '" +
                    std::string(value) + "'");
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  thresholds.validate();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void apply_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  TrainConfig& t = c.train;
  Thresholds& th = c.thresholds;
  if (key == "dataset") {
    t.dataset = std::string(value);
  } else if (key == "arch") {
    t.architecture = std::string(value);
  } else if (key == "lr") {
    t.learning_rate = to_double(key, value);
  } else if (key == "momentum") {
    t.momentum = to_double(key, value);
  } else if (key == "weight_decay") {
    t.weight_decay = to_double(key, value);
  } else if (key == "batch_size") {
    t.batch_size = to_unsigned(key, value);
  } else if (key == "epochs") {
    t.epochs = to_unsigned(key, value);
  } else if (key == "seed") {
    t.seed = to_unsigned(key, value);
  } else if (key == "train_limit") {
    t.train_limit = to_unsigned(key, value);
  } else if (key == "probe_window") {
    t.probe.window = to_switch(key, value);
  } else if (key == "norm_mode") {
    if (value == "inv-score") {
      t.probe.mode = NormalizationMode::inverse_score;
    } else if (value == "score") {
      t.probe.mode = NormalizationMode::score;
    } else {
      throw ConfigError("norm_mode must be inv-score or score, got '" + std::string(value) +
                        "'");
    }
  } else if (key == "fft_padding") {
    if (value == "pow2") {
      t.probe.padding = FftPadding::next_power_of_two;
    } else if (value == "none") {
      t.probe.padding = FftPadding::none;
    } else {
      throw ConfigError("fft_padding must be pow2 or none, got '" + std::string(value) + "'");
    }
  } else if (key == "impulse_amplitude") {
    t.probe.impulse_amplitude = to_double(key, value);
  } else if (key == "amplitude_floor") {
    t.probe.amplitude_floor = to_double(key, value);
  } else if (key == "diag_window") {
    th.window = to_unsigned(key, value);
  } else if (key == "theta_low") {
    th.theta_low = to_double(key, value);
  } else if (key == "theta_high") {
    th.theta_high = to_double(key, value);
  } else if (key == "theta_rise") {
    th.theta_rise = to_double(key, value);
  } else if (key == "rho") {
    th.rho = to_double(key, value);
  } else if (key == "epsilon") {
    th.epsilon = to_double(key, value);
  } else if (key == "dataset_dir") {
    c.dataset_dir = std::string(value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string format_train_config(const TrainConfig& t) {
  std::ostringstream out;
  out << "dataset=" << t.dataset << '\n'
      << "arch=" << t.architecture << '\n'
      << "lr=" << format_double(t.learning_rate) << '\n'
      << "momentum=" << format_double(t.momentum) << '\n'
      << "weight_decay=" << format_double(t.weight_decay) << '\n'
      << "batch_size=" << t.batch_size << '\n'
      << "epochs=" << t.epochs << '\n'
      << "seed=" << t.seed << '\n'
      << "train_limit=" << t.train_limit << '\n'
      << "probe_window=" << (t.probe.window ? "on" : "off") << '\n'
      << "norm_mode="
      << (t.probe.mode == NormalizationMode::inverse_score ? "inv-score" : "score") << '\n'
      << "fft_padding="
      << (t.probe.padding == FftPadding::next_power_of_two ? "pow2" : "none") << '\n'
      << "impulse_amplitude=" << format_double(t.probe.impulse_amplitude) << '\n'
      << "amplitude_floor=" << format_double(t.probe.amplitude_floor) << '\n';
  return out.str();
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << format_train_config(c.train) << "diag_window=" << c.thresholds.window << '\n'
      << "theta_low=" << format_double(c.thresholds.theta_low) << '\n'
      << "theta_high=" << format_double(c.thresholds.theta_high) << '\n'
      << "theta_rise=" << format_double(c.thresholds.theta_rise) << '\n'
      << "rho=" << format_double(c.thresholds.rho) << '\n'
      << "epsilon=" << format_double(c.thresholds.epsilon) << '\n';
  if (!c.dataset_dir.empty()) out << "dataset_dir=" << c.dataset_dir.string() << '\n';
  return out.str();
}

}  // namespace spectral_gain
