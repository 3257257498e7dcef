#include "spectral_gain/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

int verdict_rank(Verdict v) {
  switch (v) {
    case Verdict::converging: return 0;
    case Verdict::still_learning: return 1;
    case Verdict::overfit_onset: return 2;
    case Verdict::inconclusive: return 3;
    case Verdict::lr_too_high: return 4;
  }
  return 5;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::lr_too_high: return "lr-too-high";
    case Verdict::still_learning: return "still-learning";
    case Verdict::converging: return "converging";
    case Verdict::overfit_onset: return "overfit-onset";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

Verdict parse_verdict(std::string_view name) {
  for (Verdict v : {Verdict::lr_too_high, Verdict::still_learning, Verdict::converging,
                    Verdict::overfit_onset, Verdict::inconclusive}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown verdict '" + std::string(name) + "'");
}

void Thresholds::validate() const {
  if (window < 2) throw ConfigError("diagnostic window must be >= 2");
  if (!(theta_low >= 0.0) || !(theta_high >= 0.0) || !(theta_rise >= 0.0)) {
    throw ConfigError("diagnostic thresholds must be >= 0");
  }
  if (!(rho > 0.0) || !(epsilon >= 0.0)) {
    throw ConfigError("rho must be > 0 and epsilon >= 0");
  }
}

std::vector<double> variability(std::span<const double> curve, std::size_t window) {
  if (window < 1) throw ShapeError("variability window must be >= 1");
  if (curve.size() < window + 1) {
    throw ShapeError("curve of " + std::to_string(curve.size()) +
                     " points is too short for window " + std::to_string(window));
  }
  std::vector<double> v;
  v.reserve(curve.size() - window);
  const double w = static_cast<double>(window);
  for (std::size_t t = window; t < curve.size(); ++t) {
    double mean = 0.0;
    for (std::size_t j = t + 1 - window; j <= t; ++j) mean += curve[j] - curve[j - 1];
    mean /= w;
    double ss = 0.0;
    for (std::size_t j = t + 1 - window; j <= t; ++j) {
      const double dev = (curve[j] - curve[j - 1]) - mean;
      ss += dev * dev;
    }
    v.push_back(std::sqrt(ss / w));
  }
  return v;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ShapeError("median of an empty series");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double least_squares_slope(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw ShapeError("slope needs at least two points");
  const double mean_t = (static_cast<double>(n) - 1.0) / 2.0;
  const double mean_y =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - mean_t;
    num += dt * (values[t] - mean_y);
    den += dt * dt;
  }
  return num / den;
}

DiagnosticReport classify(std::span<const double> curve, const Thresholds& thresholds) {
  thresholds.validate();
  DiagnosticReport report;
  report.thresholds = thresholds;
  const std::size_t W = thresholds.window;

  const auto finite_end = std::find_if(curve.begin(), curve.end(),
                                       [](double g) { return !std::isfinite(g); });
  if (finite_end != curve.end()) {
    report.diverged = true;
    report.verdict = Verdict::lr_too_high;
    report.median_variability = std::numeric_limits<double>::infinity();
    const auto prefix = curve.first(static_cast<std::size_t>(finite_end - curve.begin()));
    if (prefix.size() >= W + 1) report.variability = variability(prefix, W);
    return report;
  }
  if (curve.size() < 2 * W) {
    throw ShapeError("curve of " + std::to_string(curve.size()) +
                     " epochs is too short to classify (needs " + std::to_string(2 * W) +
                     ")");
  }

  report.variability = variability(curve, W);
  const std::vector<double>& v = report.variability;
  const std::size_t half_v = v.size() / 2;
  report.median_variability = median(v);
  report.early_median = median({v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half_v)});
  report.late_median = median({v.begin() + static_cast<std::ptrdiff_t>(half_v), v.end()});
  const std::size_t half_c = curve.size() / 2;
  report.early_slope = least_squares_slope(curve.first(half_c));
  report.late_slope = least_squares_slope(curve.subspan(half_c));

  const double bound = thresholds.rho * (report.early_median + thresholds.epsilon);
  if (report.median_variability > thresholds.theta_high) {
    report.verdict = Verdict::lr_too_high;
  } else if (report.late_slope > thresholds.theta_rise) {
    report.verdict = Verdict::still_learning;
  } else if (report.early_median <= thresholds.theta_low && report.late_median > bound) {
    report.verdict = Verdict::overfit_onset;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (v[k] > bound &&
          median({v.begin() + static_cast<std::ptrdiff_t>(k), v.end()}) > bound) {
        report.onset_epoch = k + W + 1;
        break;
      }
    }
    // late_median > bound guarantees a persistent crossing in the late half.
    if (!report.onset_epoch) report.onset_epoch = half_v + W + 1;
  } else if (report.early_slope > thresholds.theta_rise &&
             report.late_slope <= thresholds.theta_rise &&
             report.late_median <= thresholds.theta_low) {
    report.verdict = Verdict::converging;
  } else {
    report.verdict = Verdict::inconclusive;
  }
  return report;
}

Comparison compare_runs(std::span<const RunSummary> runs, const Thresholds& thresholds,
                        bool allow_single) {
  if (runs.empty() || (runs.size() < 2 && !allow_single)) {
    throw ShapeError("compare_runs needs at least two runs");
  }
  // A diverged run stops early; it only has to fit inside the common span.
  const auto diverged = [](const RunSummary& r) {
    return !r.gains.empty() && !std::isfinite(r.gains.back());
  };
  const RunSummary* reference = nullptr;
  for (const RunSummary& r : runs) {
    if (!diverged(r)) reference = reference ? reference : &r;
  }
  for (const RunSummary& r : runs) {
    if (!reference) break;
    const bool fits = diverged(r) ? r.gains.size() <= reference->gains.size()
                                  : r.gains.size() == reference->gains.size();
    if (!fits) {
      throw ShapeError("run '" + r.label + "' spans " + std::to_string(r.gains.size()) +
                       " epochs, '" + reference->label + "' spans " +
                       std::to_string(reference->gains.size()));
    }
  }
  Comparison out;
  for (const RunSummary& r : runs) {
    RankedRun ranked{r.label, classify(r.gains, thresholds), r.final_train_err, ""};
    if (ranked.report.verdict == Verdict::still_learning) ranked.note = "train longer";
    out.ranking.push_back(std::move(ranked));
  }
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [](const RankedRun& a, const RankedRun& b) {
                     const int ra = verdict_rank(a.report.verdict);
                     const int rb = verdict_rank(b.report.verdict);
                     if (ra != rb) return ra < rb;
                     return a.report.median_variability < b.report.median_variability;
                   });

  std::ostringstream table;
  table << "rank  run                   verdict         onset  median_v  late_slope  "
           "train_err  note\n";
  for (std::size_t i = 0; i < out.ranking.size(); ++i) {
    const RankedRun& r = out.ranking[i];
    char line[256];
    std::snprintf(line, sizeof line, "%-5zu %-21s %-15s %-6s %-9s %-11s %-10s %s\n", i + 1,
                  r.label.c_str(), std::string(to_string(r.report.verdict)).c_str(),
                  r.report.onset_epoch ? std::to_string(*r.report.onset_epoch).c_str() : "-",
                  fixed(r.report.median_variability).c_str(),
                  r.report.diverged ? "-" : fixed(r.report.late_slope).c_str(),
                  r.final_train_err ? fixed(*r.final_train_err).c_str() : "-",
                  r.note.c_str());
    table << line;
  }
  out.table = table.str();
  return out;
}

Thresholds calibrate(std::span<const double> baseline, const Thresholds& defaults) {
  defaults.validate();
  const std::vector<double> v = variability(baseline, defaults.window);
  const double s =
      median({v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end()});
  Thresholds t = defaults;
  t.theta_low = std::max(defaults.theta_low, 2.0 * s);
  t.theta_high = std::max(defaults.theta_high, 10.0 * t.theta_low);
  return t;
}

std::string format_report(const DiagnosticReport& r) {
  std::ostringstream out;
  out << "verdict:            " << to_string(r.verdict);
  if (r.diverged) out << " (run diverged)";
  out << '\n';
  if (r.onset_epoch) out << "onset epoch:        " << *r.onset_epoch << '\n';
  out << "median variability: " << fixed(r.median_variability) << " dB\n"
      << "early / late median variability: " << fixed(r.early_median) << " / "
      << fixed(r.late_median) << " dB\n"
      << "early / late slope: " << fixed(r.early_slope) << " / " << fixed(r.late_slope)
      << " dB/epoch\n"
      << "thresholds:         W=" << r.thresholds.window
      << " theta_low=" << fixed(r.thresholds.theta_low)
      << " theta_high=" << fixed(r.thresholds.theta_high)
      << " theta_rise=" << fixed(r.thresholds.theta_rise) << " rho=" << r.thresholds.rho
      << " epsilon=" << r.thresholds.epsilon << '\n';
  if (r.verdict == Verdict::still_learning) out << "advice:             train longer\n";
  return out.str();
}

std::string format_report_record(const DiagnosticReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "verdict=" << to_string(r.verdict) << '\n'
      << "onset_epoch=" << (r.onset_epoch ? std::to_string(*r.onset_epoch) : "") << '\n'
      << "diverged=" << (r.diverged ? "true" : "false") << '\n'
      << "median_variability=" << r.median_variability << '\n'
      << "early_median=" << r.early_median << '\n'
      << "late_median=" << r.late_median << '\n'
      << "early_slope=" << r.early_slope << '\n'
      << "late_slope=" << r.late_slope << '\n'
      << "window=" << r.thresholds.window << '\n'
      << "theta_low=" << r.thresholds.theta_low << '\n'
      << "theta_high=" << r.thresholds.theta_high << '\n'
      << "theta_rise=" << r.thresholds.theta_rise << '\n'
      << "rho=" << r.thresholds.rho << '\n'
      << "epsilon=" << r.thresholds.epsilon << '\n'
      << "variability=";
  for (std::size_t i = 0; i < r.variability.size(); ++i) {
    if (i) out << ' ';
    out << r.variability[i];
  }
  out << '\n';
  return out.str();
}

}  // namespace spectral_gain
