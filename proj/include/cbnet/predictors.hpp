#pragma once

// One fit/predict contract over the model families. A Model selects columns,
// fits a Preprocessor on the training rows, then trains its learner.
//
// Specs are flat key/value maps (the `model.` section of a run config):
//   family            mlp | forest | knn | gbm | graphnet
//   granularity       sta | bss
//   columns           comma-separated name prefixes to keep (empty = all)
//   yeo_johnson       true | false
//   min_variance      drop columns whose training variance is below this
//   seed
//   mlp.branches      prefix|prefix=LAYERS;prefix=LAYERS  (LAYERS as mlp.head)
//   mlp.head          width:activation[:bn],...  e.g. 64:relu,1:linear
//   mlp.loss          mse | rmse | maskedRMSE
//   mlp.optimizer     adam | rmsprop
//   mlp.lr  mlp.epochs  mlp.batch  mlp.normalize_target
//   forest.trees  forest.depth  forest.min_leaf  forest.bootstrap
//   gbm.rounds  gbm.depth  gbm.shrinkage  gbm.min_leaf
//   knn.k
//   graph.blocks  graph.hidden  graph.lr  graph.epochs

#include "cbnet/features.hpp"
#include "cbnet/graphnet.hpp"
#include "cbnet/nn.hpp"
#include "cbnet/regressors.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cbnet {

enum class Family { MLP, RandomForest, KNN, GBM, GraphNet };
std::string to_string(Family f);
Family parse_family(std::string_view s);

struct MlpSpec {
  std::vector<nn::BranchSpec> branches;
  std::vector<nn::LayerSpec> head = {{64, nn::Activation::Relu, false}, {1, nn::Activation::Linear, false}};
  nn::Loss loss = nn::Loss::MSE;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  // Train on labels divided by their training mean.
  bool normalize_target = true;
  void validate() const;
  friend bool operator==(const MlpSpec &, const MlpSpec &) = default;
};

/// Mini-batch training with a seeded shuffle per epoch. `groups` (masked loss
/// only) gives each row's BSS; batches then hold whole BSSs. Throws
/// TrainingError naming the epoch on a non-finite loss.
void train_mlp(nn::Network &net, const nn::Matrix &x, const Eigen::VectorXd &y, const std::vector<std::size_t> *groups,
               const MlpSpec &spec, Rng &rng);

struct ModelSpec {
  Family family = Family::RandomForest;
  Granularity granularity = Granularity::STA;
  std::vector<std::string> columns;
  bool yeo_johnson = false;
  double min_variance = 0;
  std::uint64_t seed = 1;
  MlpSpec mlp;
  ForestParams forest;
  GbmParams gbm;
  std::size_t knn_k = 10;
  GraphNetSpec graph;

  void validate() const;
  /// Every key, in a fixed order, formatted for a config file.
  std::vector<std::pair<std::string, std::string>> to_kv() const;
  /// Apply one `key = value` (keys as above, without the `model.` prefix).
  void set(const std::string &key, const std::string &value);
  friend bool operator==(const ModelSpec &, const ModelSpec &) = default;
};

std::vector<std::string> preset_names();
/// Throws ConfigError listing the valid names.
ModelSpec preset(const std::string &name);
/// "preset:NAME" or a family name (defaults for that family).
ModelSpec parse_model_arg(const std::string &arg);

std::string format_layers(const std::vector<nn::LayerSpec> &layers);
std::vector<nn::LayerSpec> parse_layers(std::string_view text);

class Model {
public:
  explicit Model(ModelSpec spec = {});
  Model(const Model &o);
  Model &operator=(const Model &o);
  Model(Model &&) noexcept;
  Model &operator=(Model &&) noexcept;
  ~Model();

  /// `graphs` is required by the graphnet family and ignored otherwise.
  void fit(const FeatureTable &train, const std::vector<GraphSample> *graphs = nullptr);
  /// One prediction per row, in Mbps.
  std::vector<double> predict(const FeatureTable &t, const std::vector<GraphSample> *graphs = nullptr) const;
  bool fitted() const { return fitted_; }
  const ModelSpec &spec() const { return spec_; }
  /// Training-label mean, the reference baseline.
  double baseline() const { return baseline_; }
  /// Columns the learner sees, after selection.
  const std::vector<std::string> &columns() const { return columns_; }

  std::string serialize() const;
  static Model deserialize(std::string_view text, const std::string &source = "<memory>");

private:
  struct Learner;
  FeatureTable prepare(const FeatureTable &t) const;
  void fit_mlp(const FeatureTable &x);

  ModelSpec spec_;
  bool fitted_ = false;
  double baseline_ = 0;
  std::vector<std::string> columns_;
  Preprocessor pre_;
  double target_scale_ = 1;
  std::unique_ptr<Learner> learner_;
};

inline constexpr const char *kModelMagic = "cbnet-model v1";

/// Rows of `t` grouped by (deployment, bss), as dense group indices.
std::vector<std::size_t> bss_groups(const FeatureTable &t);

struct GridCell {
  std::size_t index = 0;
  ModelSpec spec;
  std::optional<double> rmse; // validation RMSE; empty when training failed
  std::string error;
};

struct GridReport {
  std::vector<GridCell> cells;
  std::size_t best = 0; // index into cells
};

/// Fit every spec on `train` and score it on `validation`; the best cell has
/// the lowest RMSE, ties going to the earlier cell. Failures are recorded in
/// their cell. Throws InvalidArgument on an empty grid, TrainingError when every cell fails.
GridReport grid_search(const std::vector<ModelSpec> &grid, const FeatureTable &train, const FeatureTable &validation,
                       const std::vector<GraphSample> *graphs = nullptr, int jobs = 1);
std::string to_csv(const GridReport &r);

} // namespace cbnet
