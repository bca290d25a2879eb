#pragma once

// Scoring. Negative predictions are clamped at 0 before every metric.

#include "cbnet/features.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace cbnet {

double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);
/// Fraction of |pred - truth| strictly below `threshold`.
double share_below(std::span<const double> pred, std::span<const double> truth, double threshold = 10.0);

struct Histogram {
  double bin_width = 2.0;
  double max = 50.0;                // last bin is [max, inf)
  std::vector<std::size_t> counts;  // ceil(max / bin_width) + 1 bins
  std::size_t total() const;
};

Histogram error_histogram(std::span<const double> pred, std::span<const double> truth, double bin_width = 2.0,
                          double max = 50.0);

struct BoxStats {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

/// Predictions for one scenario's rows. STA-level predictions are also
/// scored per BSS by summing them.
struct ScenarioPredictions {
  std::string scenario;
  FeatureTable table; // labelled rows; granularity decides the scoring level
  std::vector<double> predictions;
};

struct Score {
  std::string scenario;
  Granularity granularity = Granularity::STA;
  std::string model; // model name or "baseline"
  std::size_t rows = 0;
  double mae = 0, rmse = 0, share_below = 0;
};

struct EvalOptions {
  double bin_width = 2.0;
  double histogram_max = 50.0;
  double threshold = 10.0;
};

/// Scores are per scenario plus a pooled "all" row per level.
struct EvalReport {
  std::string model;
  Granularity granularity = Granularity::STA; // level the model predicts
  double baseline = 0; // training-label mean at the model's granularity
  EvalOptions options;
  std::vector<Score> scores;
  std::vector<std::pair<std::string, Histogram>> histograms; // per scenario, model errors at the scored level
  std::vector<std::tuple<std::string, Granularity, BoxStats>> labels;
  std::vector<std::string> warnings;

  /// Model MAE over baseline MAE, pooled over scenarios at the model's granularity.
  double mae_ratio() const;
};

EvalReport make_report(const std::string &model, double baseline, const std::vector<ScenarioPredictions> &scenarios,
                       const EvalOptions &opt = {});

/// Writes mae_by_scenario.csv, error_histogram.csv, label_boxplot.csv and share_below.csv.
void write_report(const EvalReport &r, const std::filesystem::path &dir);
std::string summary_table(const EvalReport &r);

} // namespace cbnet
