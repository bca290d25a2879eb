#pragma once

// Regression trees, random forest, squared-error gradient boosting and k-NN
// over a row-major matrix view.

#include "cbnet/rng.hpp"
#include "cbnet/textio.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cbnet {

struct DataView {
  std::span<const double> values; // row-major
  std::size_t rows = 0;
  std::size_t cols = 0;

  DataView() = default;
  DataView(std::span<const double> v, std::size_t r, std::size_t c);
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return values.subspan(i * cols, cols); }
};

struct TreeParams {
  int max_depth = 10;
  double min_samples_leaf = 1; // total sample weight
  std::size_t max_features = 0; // features tried per split; 0 = all
  friend bool operator==(const TreeParams &, const TreeParams &) = default;
};

/// CART regression tree: greedy exact split search over sorted feature
/// values, minimising weighted child squared error. Thresholds are midpoints
/// between consecutive distinct values; rows with x < threshold go left.
class RegressionTree {
public:
  /// `weights[i]` is the multiplicity of row i (0 excludes it).
  void fit(const DataView &x, std::span<const double> y, std::span<const double> weights, const TreeParams &params,
           Rng &rng);
  void fit(const DataView &x, std::span<const double> y, const TreeParams &params);
  double predict(std::span<const double> row) const;
  std::size_t node_count() const { return nodes_.size(); }
  int depth() const;
  void write(TextWriter &w) const;
  static RegressionTree read(TextReader &r);
  friend bool operator==(const RegressionTree &, const RegressionTree &) = default;

private:
  struct Node {
    int feature = -1; // -1 for leaves
    double threshold = 0;
    int left = -1;
    int right = -1;
    double value = 0;
    friend bool operator==(const Node &, const Node &) = default;
  };
  std::vector<Node> nodes_;
};

struct ForestParams {
  std::size_t trees = 100;
  int max_depth = 10;
  double min_samples_leaf = 1;
  bool bootstrap = true;
  bool sqrt_features = true; // try floor(sqrt(p)) features per split
  std::uint64_t seed = 1;
  friend bool operator==(const ForestParams &, const ForestParams &) = default;
};

class RandomForest {
public:
  explicit RandomForest(ForestParams p = {});
  void fit(const DataView &x, std::span<const double> y);
  double predict(std::span<const double> row) const;
  bool fitted() const { return !trees_.empty(); }
  const ForestParams &params() const { return params_; }
  void write(TextWriter &w) const;
  static RandomForest read(TextReader &r);
  friend bool operator==(const RandomForest &, const RandomForest &) = default;

private:
  ForestParams params_;
  std::vector<RegressionTree> trees_;
};

struct GbmParams {
  std::size_t rounds = 100;
  int max_depth = 3;
  double shrinkage = 0.1; // in (0, 1]
  double min_samples_leaf = 1;
  friend bool operator==(const GbmParams &, const GbmParams &) = default;
};

class GradientBoosting {
public:
  /// Throws ConfigError for rounds < 1 or shrinkage outside (0, 1].
  explicit GradientBoosting(GbmParams p = {});
  void fit(const DataView &x, std::span<const double> y);
  double predict(std::span<const double> row) const;
  bool fitted() const { return fitted_; }
  /// Training-set MSE of the unclipped ensemble after stage 0 and after every round.
  const std::vector<double> &training_mse() const { return training_mse_; }
  const std::vector<RegressionTree> &trees() const { return trees_; }
  void write(TextWriter &w) const;
  static GradientBoosting read(TextReader &r);
  friend bool operator==(const GradientBoosting &a, const GradientBoosting &b) {
    return a.params_ == b.params_ && a.fitted_ == b.fitted_ && a.base_ == b.base_ && a.lo_ == b.lo_ &&
           a.hi_ == b.hi_ && a.trees_ == b.trees_;
  }

private:
  GbmParams params_;
  bool fitted_ = false;
  double base_ = 0;
  double lo_ = 0, hi_ = 0; // training label range; predictions are clipped to it
  std::vector<RegressionTree> trees_;
  std::vector<double> training_mse_;
};

/// Mean label of the k nearest training rows under Euclidean distance after
/// per-column standardisation fitted on the training rows. Distance ties go
/// to the lower row index.
class Knn {
public:
  explicit Knn(std::size_t k = 10);
  void fit(const DataView &x, std::span<const double> y);
  double predict(std::span<const double> row) const;
  /// Indices of the k nearest training rows, nearest first.
  std::vector<std::size_t> neighbours(std::span<const double> row) const;
  bool fitted() const { return fitted_; }
  void write(TextWriter &w) const;
  static Knn read(TextReader &r);
  friend bool operator==(const Knn &, const Knn &) = default;

private:
  std::size_t k_;
  bool fitted_ = false;
  std::size_t cols_ = 0;
  std::vector<double> mean_, scale_;
  std::vector<double> train_; // standardised, row-major
  std::vector<double> labels_;
};

} // namespace cbnet
