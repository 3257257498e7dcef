#include "spectral_gain/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "spectral_gain/config.hpp"
#include "spectral_gain/error.hpp"
#include "spectral_gain/kernels.hpp"

namespace spectral_gain {

namespace {

constexpr const char* kCsvHeader =
    "epoch,train_loss,train_err,val_loss,val_err,max_gain_db,snapshot_path";

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string snapshot_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snapshots/epoch-%03zu.snap", epoch);
  return buf;
}

double parse_double(std::string_view field, std::size_t line) {
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw FormatError("metrics CSV line " + std::to_string(line) +
                      ": non-numeric field '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be > 0");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (dataset != "mnist" && dataset != "cifar10") {
    throw ConfigError("unknown dataset '" + dataset + "' (expected mnist or cifar10)");
  }
  named_architecture(architecture);
  probe.validate();
}

std::vector<double> GainCurve::gains() const {
  std::vector<double> g;
  g.reserve(records.size());
  for (const EpochRecord& r : records) g.push_back(r.max_gain_db);
  return g;
}

StepResult sgd_step(Network& net, SgdState& state, const Batch& batch,
                    const SgdParams& params) {
  const ForwardTrace trace = forward(net, batch.images);
  const BatchLoss loss = batch_logloss(trace.output(), batch.labels);
  if (!std::isfinite(loss.mean_loss)) {
    throw DivergenceError("non-finite training loss");
  }
  const BackwardTrace back = backward_projected(net, trace, loss.gradient, false);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (!all_finite(back.params[l].weights.values()) ||
        !all_finite(back.params[l].bias.values())) {
      throw DivergenceError("non-finite gradient in layer " + std::to_string(l) + " (" +
                            std::string(to_string(net.layers[l].kind)) + ")");
    }
  }

  const kernels::KernelSet& k = kernels::active();
  state.weight_velocity.resize(net.layers.size());
  state.bias_velocity.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    LayerSpec& layer = net.layers[l];
    if (!layer.has_params()) continue;
    Tensor& vw = state.weight_velocity[l];
    if (vw.empty()) vw = Tensor(layer.weights.shape());
    k.sgd_update(layer.weights.values(), vw.values(), back.params[l].weights.values(),
                 params.learning_rate, params.momentum, params.weight_decay);
    if (!layer.bias.empty()) {
      Tensor& vb = state.bias_velocity[l];
      if (vb.empty()) vb = Tensor(layer.bias.shape());
      k.sgd_update(layer.bias.values(), vb.values(), back.params[l].bias.values(),
                   params.learning_rate, params.momentum, params.weight_decay);
    }
  }
  return {loss.mean_loss, loss.errors};
}

Evaluation evaluate(const Network& net, const Dataset& ds, std::size_t chunk) {
  if (ds.size() == 0) throw ShapeError("evaluate: empty dataset");
  if (chunk == 0) throw ConfigError("evaluation chunk must be >= 1");
  double total_loss = 0.0;
  std::size_t errors = 0;
  for (std::size_t first = 0; first < ds.size(); first += chunk) {
    const std::size_t count = std::min(chunk, ds.size() - first);
    const Batch batch = slice_batch(ds, first, count);
    const BatchLoss loss =
        batch_logloss(forward(net, batch.images).output(), batch.labels, false);
    total_loss += loss.mean_loss * static_cast<double>(count);
    errors += loss.errors;
  }
  const double n = static_cast<double>(ds.size());
  return {total_loss / n, static_cast<double>(errors) / n};
}

Network initial_network(const TrainConfig& config, const Dataset& train_split) {
  Network net = init_weights(named_architecture(config.architecture), config.seed);
  net.meta.dataset = config.dataset;
  net.meta.mean_image = train_split.mean_image;
  return net;
}

GainCurve train(const TrainConfig& config, const DatasetPair& data,
                const std::filesystem::path& run_dir, const EpochCallback& on_epoch) {
  config.validate();
  std::filesystem::create_directories(run_dir / "snapshots");
  GainCurve curve;
  curve.config = config;
  Network net = initial_network(config, data.train);
  SgdState state;
  const SgdParams params{config.learning_rate, config.momentum, config.weight_decay};
  const std::filesystem::path csv = run_dir / kMetricsFile;
  write_metrics_csv(curve, csv);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      for (const auto& indices :
           shuffled_batches(data.train, config.batch_size, config.seed, epoch)) {
        sgd_step(net, state, gather_batch(data.train, indices), params);
      }
      const Evaluation tr = evaluate(net, data.train);
      const Evaluation va = evaluate(net, data.validation);
      rec.train_loss = tr.loss;
      rec.train_err = tr.error_rate;
      rec.val_loss = va.loss;
      rec.val_err = va.error_rate;
      rec.max_gain_db = impulse_gain(net, config.probe);
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.max_gain_db)) {
        throw DivergenceError("non-finite evaluation after epoch " + std::to_string(epoch));
      }
      rec.snapshot_path = snapshot_name(epoch);
      save_snapshot(net, run_dir / rec.snapshot_path);
    } catch (const DivergenceError&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rec = {epoch, nan, nan, nan, nan, nan, ""};
      curve.diverged = true;
    }
    curve.records.push_back(rec);
    write_metrics_csv(curve, csv);
    if (on_epoch) on_epoch(rec);
    if (curve.diverged) break;
  }
  return curve;
}

std::string format_metrics_csv(const GainCurve& curve) {
  std::ostringstream out;
  std::istringstream cfg(format_train_config(curve.config));
  for (std::string line; std::getline(cfg, line);) out << "# " << line << '\n';
  out << "# diverged=" << (curve.diverged ? "true" : "false") << '\n';
  out << kCsvHeader << '\n';
  for (const EpochRecord& r : curve.records) {
    out << r.epoch << ',' << format_double(r.train_loss) << ','
        << format_double(r.train_err) << ',' << format_double(r.val_loss) << ','
        << format_double(r.val_err) << ',' << format_double(r.max_gain_db) << ','
        << r.snapshot_path << '\n';
  }
  return out.str();
}

void write_metrics_csv(const GainCurve& curve, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << format_metrics_csv(curve);
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<EpochRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics CSV " + path.string());
  std::vector<EpochRecord> records;
  bool seen_header = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!seen_header) {
      if (line != kCsvHeader) {
        throw FormatError(path.string() + ": unexpected header '" + line + "'");
      }
      seen_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 7) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": expected 7 "
                        "fields, got " + std::to_string(fields.size()));
    }
    EpochRecord r;
    const double epoch = parse_double(fields[0], line_no);
    if (!(epoch >= 1) || epoch != std::floor(epoch)) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) +
                        ": invalid epoch '" + fields[0] + "'");
    }
    r.epoch = static_cast<std::size_t>(epoch);
    r.train_loss = parse_double(fields[1], line_no);
    r.train_err = parse_double(fields[2], line_no);
    r.val_loss = parse_double(fields[3], line_no);
    r.val_err = parse_double(fields[4], line_no);
    r.max_gain_db = parse_double(fields[5], line_no);
    r.snapshot_path = fields[6];
    if (!records.empty() && r.epoch != records.back().epoch + 1) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) +
                        ": epochs must increase by one");
    }
    records.push_back(std::move(r));
  }
  if (!seen_header) throw FormatError(path.string() + ": missing CSV header");
  return records;
}

}  // namespace spectral_gain
