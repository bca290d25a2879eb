#pragma once

// Edge-to-node graph network. Each block updates every edge from
// (edge, source node, destination node), averages the updated edges arriving
// at each node (zero vector when none arrive), and updates every node from
// (node, aggregate). No global attributes.

#include "cbnet/features.hpp"
#include "cbnet/nn.hpp"

#include <cstdint>
#include <vector>

namespace cbnet {

struct GraphNetBlock {
  nn::Sequential edge_mlp;
  nn::Sequential node_mlp;
};

class GraphNetwork {
public:
  std::vector<GraphNetBlock> blocks;

  /// `nodes` is N x v, `edges` is M x e; src/dst index rows of `nodes`.
  /// Returns the final node states.
  nn::Matrix forward(const nn::Matrix &nodes, const nn::Matrix &edges, const std::vector<std::size_t> &src,
                     const std::vector<std::size_t> &dst, bool training);
  /// Back-propagate d(loss)/d(final node states) from the last forward().
  void backward(const nn::Matrix &d_nodes);
  std::vector<nn::Param *> params();
  void zero_grad();
  void write(TextWriter &w) const;
  static GraphNetwork read(TextReader &r);

private:
  std::vector<std::size_t> src_, dst_;
  std::vector<double> indegree_;
  std::vector<Eigen::Index> node_widths_, edge_widths_;
};

/// Raw forward pass over one graph's features (no scaling).
nn::Matrix graphnet_forward(GraphNetwork &net, const GraphSample &g);

struct GraphNetSpec {
  std::size_t blocks = 2;
  std::size_t hidden = 32;
  double learning_rate = 2e-3;
  std::size_t epochs = 40;
  std::uint64_t seed = 1;
  friend bool operator==(const GraphNetSpec &, const GraphNetSpec &) = default;
};

/// Trainable graph network over GraphSamples. Node and edge features are
/// standardised with statistics from the training graphs. The final block
/// emits one value per node; STA outputs are throughput predictions and an
/// AP's prediction is the sum over its STAs. Trained with the masked loss,
/// one graph per step.
class GraphNetModel {
public:
  explicit GraphNetModel(GraphNetSpec spec = {});
  void fit(const std::vector<GraphSample> &graphs);
  /// Per-node predictions in Mbps (APs get the sum of their STAs).
  std::vector<double> predict(const GraphSample &g) const;
  bool fitted() const { return fitted_; }
  const GraphNetSpec &spec() const { return spec_; }
  void write(TextWriter &w) const;
  static GraphNetModel read(TextReader &r);

private:
  nn::Matrix node_matrix(const GraphSample &g) const;
  nn::Matrix edge_matrix(const GraphSample &g) const;

  GraphNetSpec spec_;
  bool fitted_ = false;
  std::vector<double> node_mean_, node_scale_, edge_mean_, edge_scale_;
  double target_scale_ = 1;
  GraphNetwork net_;
};

/// For each STA node, the index of its AP node (by BSS id); APs map to themselves.
std::vector<std::size_t> graph_membership(const GraphSample &g);

} // namespace cbnet
