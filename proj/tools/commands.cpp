#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "spectral_gain/dataset.hpp"
#include "spectral_gain/diagnostics.hpp"
#include "spectral_gain/error.hpp"
#include "spectral_gain/image_io.hpp"
#include "spectral_gain/kernels.hpp"
#include "spectral_gain/network.hpp"
#include "spectral_gain/spectral.hpp"
#include "spectral_gain/training.hpp"

namespace spectral_gain::cli {

namespace fs = std::filesystem;

namespace {

// Manifest lines "#@ key=value" carry command-level settings; the remaining
// key=value lines are a config file that parse_config_text accepts as is.
constexpr const char* kMetaPrefix = "#@ ";

using MetaList = std::vector<std::pair<std::string, std::string>>;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest(const fs::path& dir, const MetaList& meta, const std::string& config) {
  std::ostringstream out;
  for (const auto& [k, v] : meta) out << kMetaPrefix << k << '=' << v << '\n';
  out << kMetaPrefix << "isa=" << kernels::active().name << '\n';
  out << config;
  write_text(dir / "manifest.txt", out.str());
}

std::string absolute_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

std::string format_probe_config(const ProbeConfig& probe) {
  std::ostringstream out;
  out << "probe_window=" << (probe.window ? "on" : "off") << '\n'
      << "norm_mode=" << (probe.mode == NormalizationMode::inverse_score ? "inv-score" : "score")
      << '\n'
      << "fft_padding=" << (probe.padding == FftPadding::next_power_of_two ? "pow2" : "none")
      << '\n'
      << "impulse_amplitude=" << format_double(probe.impulse_amplitude) << '\n'
      << "amplitude_floor=" << format_double(probe.amplitude_floor) << '\n';
  return out.str();
}

std::string format_thresholds(const Thresholds& t) {
  std::ostringstream out;
  out << "diag_window=" << t.window << '\n'
      << "theta_low=" << format_double(t.theta_low) << '\n'
      << "theta_high=" << format_double(t.theta_high) << '\n'
      << "theta_rise=" << format_double(t.theta_rise) << '\n'
      << "rho=" << format_double(t.rho) << '\n'
      << "epsilon=" << format_double(t.epsilon) << '\n';
  return out.str();
}

std::string multiplier_label(double m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lr-x%g", m);
  return buf;
}

void write_plane_outputs(const Tensor& plane, const fs::path& stem, bool with_pgm) {
  fs::path txt = stem;
  txt += ".txt";
  write_matrix(plane, txt);
  if (with_pgm) {
    fs::path pgm = stem;
    pgm += ".pgm";
    write_pgm(plane, pgm);
  }
}

struct ToyCase {
  std::string name;
  Tensor input;       // (h, w, 1)
  Tensor projection;  // output-shaped
};

void run_toy_case(const Network& net, const ToyCase& c, const ProbeConfig& probe,
                  const fs::path& dir, std::ostream& summary) {
  const std::vector<SpectralResponse> responses =
      probe_with_projection(net, c.input, c.projection, probe);
  const SpectralResponse& r = responses.front();
  const ForwardTrace trace = forward(net, c.input);
  write_plane_outputs(channel_plane(c.input, 0), dir / (c.name + "_input"), true);
  write_plane_outputs(channel_plane(trace.output(), 0), dir / (c.name + "_output"), true);
  write_plane_outputs(r.derivative, dir / (c.name + "_derivative"), true);
  write_plane_outputs(r.amplitude_db, dir / (c.name + "_spectrum_db"), true);
  summary << c.name << ": max_gain_db=" << format_double(r.max_gain_db) << " peak=("
          << r.peak_row << "," << r.peak_col << ")\n";
}

Tensor one_hot_like(const Tensor& output, std::size_t index) {
  Tensor p(output.shape());
  p[index] = 1.0;
  return p;
}

RunSummary summary_from_records(const std::string& label,
                                const std::vector<EpochRecord>& records) {
  RunSummary s;
  s.label = label;
  for (const EpochRecord& r : records) s.gains.push_back(r.max_gain_db);
  if (!records.empty() && std::isfinite(records.back().train_err)) {
    s.final_train_err = records.back().train_err;
  }
  return s;
}

// Wall-clock training time goes beside the metrics, not into them, so the
// CSV stays bit-reproducible.
GainCurve timed_train(const TrainConfig& config, const DatasetPair& data, const fs::path& dir,
                      const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  GainCurve curve = train(config, data, dir, on_epoch);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  write_text(dir / kElapsedFile, format_double(elapsed.count()) + "\n");
  return curve;
}

void write_reports(const DiagnosticReport& report, const fs::path& dir) {
  write_text(dir / "report.txt", format_report(report));
  write_text(dir / "report.record", format_report_record(report));
}

}  // namespace

fs::path fresh_directory(const fs::path& requested, const std::string& stem) {
  fs::path dir = requested;
  if (dir.empty()) {
    for (int i = 1;; ++i) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "-%03d", i);
      dir = fs::path("runs") / (stem + suffix);
      if (!fs::exists(dir)) break;
    }
  } else if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw ConfigError("output directory " + dir.string() +
                      " already exists and is not empty; outputs go to a fresh directory");
  }
  fs::create_directories(dir);
  return dir;
}

fs::path resolve_dataset_dir(const RunConfig& config) {
  if (!config.dataset_dir.empty()) return config.dataset_dir;
  if (const char* env = std::getenv("SPECTRAL_GAIN_DATA"); env && *env) return env;
  throw IoError("no dataset directory: pass --dataset-dir or set SPECTRAL_GAIN_DATA");
}

int run_toy(const ToyOptions& options) {
  Tensor base;
  if (options.image) {
    // First (red) channel, mean-subtracted.
    const Tensor img = read_pnm(*options.image);
    base = channel_plane(img, 0).reshaped(Shape{img.shape().height(), img.shape().width(), 1});
    double mean = 0.0;
    for (double v : base.values()) mean += v;
    mean /= static_cast<double>(base.size());
    for (double& v : base.values()) v -= mean;
  } else {
    if (options.size < 8) throw ConfigError("toy image size must be >= 8");
    base = impulse_image(options.size, options.size, 1, 255.0)
               .reshaped(Shape{options.size, options.size, 1});
  }
  const std::size_t h = base.shape().height();
  const std::size_t w = base.shape().width();
  const fs::path dir = fresh_directory(options.out_dir, "toy");
  MetaList meta{{"command", "toy"}, {"size", std::to_string(options.size)}};
  if (options.image) meta.emplace_back("image", absolute_string(*options.image));
  ProbeConfig probe;
  write_manifest(dir, meta, format_probe_config(probe));

  const Network net = make_toy_network(h, w);
  write_matrix(net.layers[0].weights.reshaped(Shape{7, 7}), dir / "filter.txt");
  const ForwardTrace trace = forward(net, base);
  const Tensor& out = trace.output();

  // p = 1 at the strongest output unit and at a unit the relu has zeroed,
  // then the impulse input with p = 1 at every unit.
  const ArgMax strongest = argmax_flat(out);
  std::optional<std::size_t> gated;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == 0.0) {
      gated = i;
      break;
    }
  }
  std::vector<ToyCase> cases;
  cases.push_back({"active_unit", base, one_hot_like(out, strongest.index)});
  if (gated) cases.push_back({"gated_unit", base, one_hot_like(out, *gated)});
  Tensor ones(out.shape());
  for (double& v : ones.values()) v = 1.0;
  const Tensor impulse = impulse_image(h, w, 1, 255.0).reshaped(Shape{h, w, 1});
  cases.push_back({"impulse_all_units", impulse, ones});

  std::ostringstream summary;
  summary << "toy network: 7x7 gaussian (sigma 1, unit sum) conv + relu on " << h << "x" << w
          << '\n';
  for (const ToyCase& c : cases) run_toy_case(net, c, probe, dir, summary);
  write_text(dir / "summary.txt", summary.str());
  std::cout << summary.str() << "outputs in " << dir.string() << '\n';
  return kOk;
}

int run_train(const TrainOptions& options) {
  options.config.validate();
  const fs::path root = resolve_dataset_dir(options.config);
  const DatasetPair data =
      load_named(options.config.train.dataset, root, options.config.train.train_limit);
  const fs::path dir = fresh_directory(options.out_dir, "train");
  RunConfig recorded = options.config;
  recorded.dataset_dir = fs::absolute(root);
  write_manifest(dir, {{"command", "train"}}, format_run_config(recorded));

  const GainCurve curve = timed_train(options.config.train, data, dir, [](const EpochRecord& r) {
    std::fprintf(stderr,
                 "epoch %3zu  train_loss %.5f  train_err %.4f  val_loss %.5f  val_err %.4f  "
                 "max_gain_db %.4f\n",
                 r.epoch, r.train_loss, r.train_err, r.val_loss, r.val_err, r.max_gain_db);
  });
  const std::vector<double> gains = curve.gains();
  if (curve.diverged || gains.size() >= 2 * options.config.thresholds.window) {
    const DiagnosticReport report = classify(gains, options.config.thresholds);
    write_reports(report, dir);
    std::cout << format_report(report);
  }
  std::cout << "run directory " << dir.string() << '\n';
  if (curve.diverged) {
    std::cerr << "run diverged at epoch " << curve.records.back().epoch << '\n';
    return kDiverged;
  }
  return kOk;
}

int run_sweep(const SweepOptions& options) {
  if (options.multipliers.empty()) throw ConfigError("sweep needs at least one multiplier");
  for (double m : options.multipliers) {
    if (!(m > 0.0)) throw ConfigError("learning-rate multipliers must be > 0");
  }
  options.config.validate();
  const fs::path root = resolve_dataset_dir(options.config);
  const DatasetPair data =
      load_named(options.config.train.dataset, root, options.config.train.train_limit);
  const fs::path dir = fresh_directory(options.out_dir, "sweep");

  std::ostringstream mult;
  for (std::size_t i = 0; i < options.multipliers.size(); ++i) {
    if (i) mult << ',';
    mult << format_double(options.multipliers[i]);
  }
  RunConfig recorded = options.config;
  recorded.dataset_dir = fs::absolute(root);
  MetaList meta{{"command", "sweep"},
                {"multipliers", mult.str()},
                {"calibrate", options.calibrate ? "on" : "off"}};
  if (options.calibrate_from) meta.emplace_back("calibrate_from", absolute_string(*options.calibrate_from));
  write_manifest(dir, meta, format_run_config(recorded));

  std::vector<RunSummary> summaries;
  std::optional<std::size_t> baseline;
  for (std::size_t i = 0; i < options.multipliers.size(); ++i) {
    const double m = options.multipliers[i];
    RunConfig run = recorded;
    run.train.learning_rate = options.config.train.learning_rate * m;
    const fs::path run_dir = dir / multiplier_label(m);
    fs::create_directories(run_dir);
    write_manifest(run_dir, {{"command", "train"}}, format_run_config(run));
    std::fprintf(stderr, "== %s (lr %s)\n", multiplier_label(m).c_str(),
                 format_double(run.train.learning_rate).c_str());
    const GainCurve curve = timed_train(run.train, data, run_dir, [](const EpochRecord& r) {
      std::fprintf(stderr, "epoch %3zu  train_err %.4f  val_err %.4f  max_gain_db %.4f\n",
                   r.epoch, r.train_err, r.val_err, r.max_gain_db);
    });
    summaries.push_back(summary_from_records(multiplier_label(m), curve.records));
    if (m == 1.0 && !baseline) baseline = i;
  }

  Thresholds thresholds = options.config.thresholds;
  std::string calibration = "none";
  if (options.calibrate_from) {
    thresholds = calibrate(summary_from_records("", read_metrics_csv(*options.calibrate_from)).gains,
                           thresholds);
    calibration = absolute_string(*options.calibrate_from);
  } else if (options.calibrate && baseline) {
    const std::vector<double>& g = summaries[*baseline].gains;
    if (std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); }) &&
        g.size() > thresholds.window) {
      thresholds = calibrate(g, thresholds);
      calibration = multiplier_label(1.0);
    }
  }

  std::size_t span = 0;
  for (const RunSummary& s : summaries) span = std::max(span, s.gains.size());
  bool comparable = true;
  for (const RunSummary& s : summaries) {
    const bool diverged = !s.gains.empty() && !std::isfinite(s.gains.back());
    comparable = comparable && (diverged ? s.gains.size() <= span : s.gains.size() == span);
  }
  std::ostringstream text;
  text << "calibration: " << calibration << '\n' << format_thresholds(thresholds) << '\n';
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const RunSummary& s = summaries[i];
    const bool finite = std::all_of(s.gains.begin(), s.gains.end(),
                                    [](double g) { return std::isfinite(g); });
    if (finite && s.gains.size() < 2 * thresholds.window) continue;
    const DiagnosticReport report = classify(s.gains, thresholds);
    write_reports(report, dir / s.label);
  }
  if (comparable && (summaries.size() >= 2 || span >= 2 * thresholds.window)) {
    const Comparison cmp = compare_runs(summaries, thresholds, true);
    text << cmp.table;
  } else {
    text << "runs are not comparable (different epoch spans after divergence); see per-run "
            "reports\n";
  }
  write_text(dir / "comparison.txt", text.str());
  std::cout << text.str() << "sweep directory " << dir.string() << '\n';
  return kOk;
}

int run_probe(const ProbeOptions& options) {
  options.probe.validate();
  const Network net = load_snapshot(options.snapshot);
  Tensor x;
  if (options.image == "impulse") {
    x = preprocessed_impulse(net, options.probe);
  } else {
    const Tensor img = read_pnm(options.image);
    if (img.shape() != net.input_shape) {
      throw ShapeError("image " + img.shape().to_string() + " does not match network input " +
                       net.input_shape.to_string());
    }
    x = img;
    if (!net.meta.mean_image.empty()) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= net.meta.mean_image[i];
    }
  }
  const fs::path dir = fresh_directory(options.out_dir, "probe");
  const std::string image =
      options.image == "impulse" ? options.image : absolute_string(options.image);
  write_manifest(dir,
                 {{"command", "probe"}, {"snapshot", absolute_string(options.snapshot)},
                  {"image", image}},
                 format_probe_config(options.probe));

  const std::vector<SpectralResponse> responses = probe(net, x, options.probe);
  for (const SpectralResponse& r : responses) {
    const std::string c = "channel" + std::to_string(r.channel);
    write_matrix(r.derivative, dir / (c + "_derivative.txt"));
    write_matrix(r.amplitude_db, dir / (c + "_spectrum_db.txt"));
    write_text(dir / (c + "_gain.txt"),
               "max_gain_db=" + format_double(r.max_gain_db) + "\npeak_row=" +
                   std::to_string(r.peak_row) + "\npeak_col=" + std::to_string(r.peak_col) +
                   "\nclass_index=" + std::to_string(r.class_index) +
                   "\nscore=" + format_double(r.score) + "\n");
  }
  const double gain = mean_gain(responses);
  write_text(dir / "gain.txt", "max_gain_db=" + format_double(gain) + "\n");
  std::cout << "max_gain_db " << format_double(gain) << "\nprobe directory " << dir.string()
            << '\n';
  return kOk;
}

int run_diagnose(const DiagnoseOptions& options) {
  if (options.csv_paths.empty()) throw ConfigError("diagnose needs at least one metrics CSV");
  Thresholds thresholds = options.thresholds;
  if (options.calibrate_from) {
    thresholds = calibrate(summary_from_records("", read_metrics_csv(*options.calibrate_from)).gains,
                           thresholds);
  }
  std::vector<RunSummary> summaries;
  std::vector<DiagnosticReport> reports;
  for (const fs::path& csv : options.csv_paths) {
    summaries.push_back(summary_from_records(csv.parent_path().filename().string().empty()
                                                 ? csv.string()
                                                 : csv.parent_path().filename().string(),
                                             read_metrics_csv(csv)));
    reports.push_back(classify(summaries.back().gains, thresholds));
  }
  const fs::path dir = fresh_directory(options.out_dir, "diagnose");
  MetaList meta{{"command", "diagnose"}};
  for (const fs::path& csv : options.csv_paths) meta.emplace_back("csv", absolute_string(csv));
  if (options.calibrate_from) meta.emplace_back("calibrate_from", absolute_string(*options.calibrate_from));
  write_manifest(dir, meta, format_thresholds(options.thresholds));

  std::ostringstream text;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    text << "== " << options.csv_paths[i].string() << '\n' << format_report(reports[i]) << '\n';
    write_text(dir / ("report-" + std::to_string(i + 1) + ".record"),
               "csv=" + absolute_string(options.csv_paths[i]) + "\n" +
                   format_report_record(reports[i]));
  }
  if (summaries.size() >= 2) text << compare_runs(summaries, thresholds).table;
  write_text(dir / "report.txt", text.str());
  std::cout << text.str() << "diagnose directory " << dir.string() << '\n';
  return kOk;
}

int run_replay(const fs::path& manifest, const fs::path& out_dir) {
  const std::string text = read_text(manifest);
  std::multimap<std::string, std::string> meta;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind(kMetaPrefix, 0) != 0) continue;
    const std::string body = line.substr(std::string(kMetaPrefix).size());
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError("malformed manifest line '" + line + "'");
    meta.emplace(body.substr(0, eq), body.substr(eq + 1));
  }
  const auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = meta.find(key);
    if (it == meta.end()) return std::nullopt;
    return it->second;
  };
  const std::string command = get("command").value_or("");
  const RunConfig config = parse_config_text(text);
  if (command == "train") return run_train({config, out_dir});
  if (command == "sweep") {
    SweepOptions o{config, {}, std::nullopt, get("calibrate").value_or("on") == "on", out_dir};
    std::istringstream ms(get("multipliers").value_or(""));
    for (std::string m; std::getline(ms, m, ',');) o.multipliers.push_back(std::stod(m));
    if (auto c = get("calibrate_from")) o.calibrate_from = *c;
    return run_sweep(o);
  }
  if (command == "probe") {
    return run_probe({get("snapshot").value_or(""), get("image").value_or("impulse"),
                      config.train.probe, out_dir});
  }
  if (command == "toy") {
    ToyOptions o;
    if (auto img = get("image")) o.image = *img;
    o.size = std::stoul(get("size").value_or("32"));
    o.out_dir = out_dir;
    return run_toy(o);
  }
  if (command == "diagnose") {
    DiagnoseOptions o;
    for (auto [it, end] = meta.equal_range("csv"); it != end; ++it) o.csv_paths.emplace_back(it->second);
    o.thresholds = config.thresholds;
    if (auto c = get("calibrate_from")) o.calibrate_from = *c;
    o.out_dir = out_dir;
    return run_diagnose(o);
  }
  throw FormatError(manifest.string() + ": no replayable command recorded");
}

}  // namespace spectral_gain::cli
