#pragma once

// Classification of per-epoch Maximum Gain curves. All statistics use
// first differences and slopes, so adding a constant dB offset to a curve
// never changes a verdict.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spectral_gain {

enum class Verdict { lr_too_high, still_learning, converging, overfit_onset, inconclusive };

std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view name);

struct Thresholds {
  std::size_t window = 5;  // W, epochs
  double theta_low = 0.1;  // dB
  double theta_high = 1.0; // dB
  double theta_rise = 0.1; // dB per epoch
  double rho = 3.0;
  double epsilon = 0.01;   // dB

  void validate() const;
  bool operator==(const Thresholds&) const = default;
};

struct DiagnosticReport {
  Verdict verdict = Verdict::inconclusive;
  std::optional<std::size_t> onset_epoch;  // 1-based; set iff overfit_onset
  std::vector<double> variability;         // v_t for t = W .. n-1 (0-based)
  double median_variability = 0.0;
  double early_median = 0.0;
  double late_median = 0.0;
  double early_slope = 0.0;
  double late_slope = 0.0;
  bool diverged = false;
  Thresholds thresholds;
};

// v_t = population std of the W first differences ending at curve index t,
// for t = W .. n-1; the result has n - W entries. Throws ShapeError when the
// curve has fewer than W + 1 points.
std::vector<double> variability(std::span<const double> curve, std::size_t window);

double median(std::vector<double> values);

// Least-squares slope of values against their index.
double least_squares_slope(std::span<const double> values);

// Decision procedure on the first-half / second-half statistics:
//   lr-too-high    median v over all t > theta_high, or any non-finite gain
//   still-learning late slope > theta_rise
//   overfit-onset  early median <= theta_low and late median > rho (early + eps)
//   converging     early slope > theta_rise, late slope <= theta_rise and
//                  late median <= theta_low
//   inconclusive   otherwise
// The onset is the first t whose v_t exceeds rho (early median + eps) and
// from which the median of the remaining v stays above that bound. Finite
// curves shorter than 2W throw ShapeError.
DiagnosticReport classify(std::span<const double> curve, const Thresholds& thresholds);

struct RunSummary {
  std::string label;
  std::vector<double> gains;
  std::optional<double> final_train_err;
};

struct RankedRun {
  std::string label;
  DiagnosticReport report;
  std::optional<double> final_train_err;
  std::string note;  // "train longer" for still-learning runs
};

struct Comparison {
  std::vector<RankedRun> ranking;  // best first
  std::string table;
};

// Stable ordering: not lr-too-high first, then converging > still-learning >
// overfit-onset > inconclusive, then lower median variability. Throws
// ShapeError when finite runs differ in length, when a diverged run (one
// ending in a non-finite gain) is longer than them, or when fewer than two
// runs are given unless allow_single is set.
Comparison compare_runs(std::span<const RunSummary> runs, const Thresholds& thresholds,
                        bool allow_single = false);

// Calibration from a baseline run assumed to converge, with s the late-half
// median of its v_t:
//   theta_low  = max(defaults.theta_low, 2 s)
//   theta_high = max(defaults.theta_high, 10 theta_low)
// W, theta_rise, rho and epsilon are kept.
Thresholds calibrate(std::span<const double> baseline, const Thresholds& defaults);

// Human-readable multi-line report.
std::string format_report(const DiagnosticReport& report);

// key=value machine-readable record.
std::string format_report_record(const DiagnosticReport& report);

}  // namespace spectral_gain
