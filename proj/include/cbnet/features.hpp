#pragma once

// Feature extraction and preprocessing. A FeatureTable is a row-per-entity
// numeric matrix (one row per STA, or one per BSS after aggregation) with a
// named schema; one-hot columns are named `group#k`.
//
// STA schema, in order:
//   x, y, distance                      STA position and distance to its AP
//   primary#0..7, min#0..7, max#0..7    AP channel configuration
//   rssi, sinr                          mean link observables of the STA
//   ap_airtime_mean                     AP airtime averaged over its range
//   ap_interference                     AP sensed interference plus noise, dBm
//   ap_airtime_ch0..7                   AP airtime per channel
//
// The BSS schema replaces each STA-level numeric column `c` by `c_mean` and
// `c_std` and keeps the AP-level columns (one-hots and `ap_*`) as they are.

#include "cbnet/deployment.hpp"
#include "cbnet/macsim.hpp"
#include "cbnet/rf.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cbnet {

enum class Granularity { STA, BSS };
std::string to_string(Granularity g);
Granularity parse_granularity(std::string_view text);

struct FeatureColumn {
  std::string name;
  std::string group; // one-hot group, empty for numeric columns
  bool one_hot() const { return !group.empty(); }
  friend bool operator==(const FeatureColumn &, const FeatureColumn &) = default;
};

struct FeatureSchema {
  Granularity granularity = Granularity::STA;
  std::vector<FeatureColumn> columns;

  std::size_t width() const { return columns.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;
  std::vector<std::string> names() const;
  /// Names unique, one-hot groups contiguous.
  void validate() const;
  /// Columns named `group#k` become members of one-hot group `group`.
  static FeatureSchema from_names(Granularity g, const std::vector<std::string> &names);
  friend bool operator==(const FeatureSchema &, const FeatureSchema &) = default;
};

struct FeatureTable {
  FeatureSchema schema;
  std::vector<std::string> deployment; // per row
  std::vector<std::string> bss;        // per row
  std::vector<std::string> entity;     // STA code, or BSS id for BSS rows
  std::vector<double> values;          // row-major, rows() x width()
  std::vector<double> labels;          // throughput in Mbps; empty when unlabelled

  std::size_t rows() const { return entity.size(); }
  std::size_t width() const { return schema.width(); }
  bool labelled() const { return !labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * width(), width()}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * width(), width()}; }
  double at(std::size_t i, std::size_t j) const { return values[i * width() + j]; }
  std::vector<double> column(std::size_t j) const;

  void add_row(std::string dep, std::string bss_id, std::string ent, std::span<const double> x,
               std::optional<double> label);
  FeatureTable select_rows(const std::vector<std::size_t> &indices) const;
  /// Keep the named columns, in the given order.
  FeatureTable select_columns(const std::vector<std::string> &names) const;
  /// Rows whose deployment is in `ids` (order preserved).
  FeatureTable filter_deployments(const std::vector<std::string> &ids) const;
  /// Concatenate tables with identical schemas.
  static FeatureTable concat(const std::vector<FeatureTable> &parts);
  void validate() const;
  friend bool operator==(const FeatureTable &, const FeatureTable &) = default;
};

struct ExtractOptions {
  RfConfig rf; // noise floor for interference-plus-noise; path loss for imputation
  bool labels = true;
  // STAs that received nothing have no mean observables. When set, fill them
  // from geometry (AP-to-STA rssi at the AP's widest bond, AP-side
  // interference) instead of failing.
  bool impute_missing = false;
};

FeatureTable extract_sta(const Deployment &d, const SimResult &r, const ExtractOptions &opt = {});
FeatureTable aggregate_bss(const FeatureTable &sta);

double yeo_johnson(double x, double lambda);
/// Maximum-likelihood lambda on [-2, 2] by golden-section search, tolerance 1e-4.
double fit_yeo_johnson_lambda(std::span<const double> column);

class Preprocessor {
public:
  /// Fit a standard scaler on every numeric column (one-hot columns pass
  /// through), optionally after a per-column Yeo-Johnson transform.
  void fit(const FeatureTable &t, bool yeo_johnson = false);
  bool fitted() const { return fitted_; }
  FeatureTable transform(const FeatureTable &t) const;
  void transform_row(std::span<double> x) const;
  const std::vector<std::string> &names() const { return names_; }

  std::string serialize() const;
  static Preprocessor deserialize(std::string_view text);
  friend bool operator==(const Preprocessor &, const Preprocessor &) = default;

private:
  bool fitted_ = false;
  std::vector<std::string> names_;
  std::vector<char> scaled_;
  std::vector<std::optional<double>> lambda_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> r;
  std::vector<std::string> warnings;
};

/// Pearson correlations of all columns (plus the label as "throughput" when
/// present). Zero-variance columns get 0 off the diagonal and a warning.
CorrelationMatrix correlation_matrix(const FeatureTable &t, bool include_label = true);
std::string to_csv(const CorrelationMatrix &m);

struct FeatureStat {
  std::string name;
  double variance = 0;
  bool low_variance = false;
  std::optional<double> label_correlation;
  std::optional<double> p_value; // two-sided t-test of zero correlation with the label
};

std::vector<FeatureStat> feature_report(const FeatureTable &t, double variance_threshold = 1e-12);
std::string to_csv(const std::vector<FeatureStat> &report);

enum class SplitLevel { Deployment, Row };
SplitLevel parse_split_level(std::string_view text);

/// Deterministic shuffle of the distinct deployment ids (first-appearance
/// order) keeping round(fraction * n) of them for training.
std::pair<std::vector<std::string>, std::vector<std::string>>
split_deployments(const std::vector<std::string> &deployment_ids, double fraction, std::uint64_t seed);

std::pair<FeatureTable, FeatureTable> split(const FeatureTable &t, double fraction, std::uint64_t seed,
                                            SplitLevel level = SplitLevel::Deployment);

std::string to_csv(const FeatureTable &t);
FeatureTable features_from_csv(std::string_view text, const std::string &source = "<memory>");
void write_features_csv(const FeatureTable &t, const std::filesystem::path &path);
FeatureTable read_features_csv(const std::filesystem::path &path);

inline constexpr const char *kFeaturesMagic = "cbnet-features v1";

// Graph view of one deployment: APs and STAs are nodes; AP->AP edges carry
// the interference map, AP->STA edges the downlink.
//
// Node features: type (AP=0, STA=1), x, y, primary#0..7, min#0..7, max#0..7,
// sinr (STAs, 0 for APs), airtime mean (APs, 0 for STAs).
// Edge features: type (AP-AP=0, AP-STA=1), distance, rssi, interference
// (interference plus noise at the receiving node, dBm).

inline constexpr std::size_t kGraphNodeWidth = 29;
inline constexpr std::size_t kGraphEdgeWidth = 4;

struct GraphNode {
  NodeKind kind = NodeKind::STA;
  std::string code;
  std::string bss;
  std::vector<double> features;
  std::optional<double> label;
  friend bool operator==(const GraphNode &, const GraphNode &) = default;
};

struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::vector<double> features;
  friend bool operator==(const GraphEdge &, const GraphEdge &) = default;
};

struct GraphSample {
  std::string deployment_id;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  void validate() const;
  friend bool operator==(const GraphSample &, const GraphSample &) = default;
};

GraphSample build_graph(const Deployment &d, const SimResult &r, const ExtractOptions &opt = {});

/// Node and edge files (`graph_nodes.csv`, `graph_edges.csv` layout) for a list of graphs.
std::pair<std::string, std::string> graphs_to_csv(const std::vector<GraphSample> &graphs);
std::vector<GraphSample> graphs_from_csv(std::string_view nodes, std::string_view edges,
                                         const std::string &source = "<memory>");

inline constexpr const char *kGraphNodesMagic = "cbnet-graph-nodes v1";
inline constexpr const char *kGraphEdgesMagic = "cbnet-graph-edges v1";

} // namespace cbnet
