#pragma once

// Small dense neural networks on Eigen. Rows are samples. Layers cache what
// they need during forward() and accumulate parameter gradients in backward().

#include "cbnet/rng.hpp"
#include "cbnet/textio.hpp"

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbnet::nn {

using Matrix = Eigen::MatrixXd;

struct Param {
  Matrix value;
  Matrix grad;
  Matrix m; // optimizer state
  Matrix v;
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Layer {
public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Matrix forward(const Matrix &x, bool training) = 0;
  virtual Matrix backward(const Matrix &dy) = 0;
  virtual std::vector<Param *> params() { return {}; }
  virtual std::size_t out_width(std::size_t in) const { return in; }
  virtual void write(TextWriter &w) const;
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Dense final : public Layer {
public:
  /// He-normal weights, zero bias.
  Dense(std::size_t in, std::size_t out, Rng &rng);
  Dense(Matrix weight, Matrix bias);
  std::string kind() const override { return "dense"; }
  Matrix forward(const Matrix &x, bool training) override;
  Matrix backward(const Matrix &dy) override;
  std::vector<Param *> params() override { return {&w_, &b_}; }
  std::size_t out_width(std::size_t) const override { return static_cast<std::size_t>(w_.value.cols()); }
  void write(TextWriter &w) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  Param &weight() { return w_; }
  Param &bias() { return b_; }

private:
  Param w_; // in x out
  Param b_; // 1 x out
  Matrix x_;
};

class Relu final : public Layer {
public:
  std::string kind() const override { return "relu"; }
  Matrix forward(const Matrix &x, bool training) override;
  Matrix backward(const Matrix &dy) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

private:
  Matrix x_;
};

/// Parametric ReLU with one learned slope for negative inputs.
class Prelu final : public Layer {
public:
  explicit Prelu(double slope = 0.25);
  std::string kind() const override { return "prelu"; }
  Matrix forward(const Matrix &x, bool training) override;
  Matrix backward(const Matrix &dy) override;
  std::vector<Param *> params() override { return {&a_}; }
  void write(TextWriter &w) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Prelu>(*this); }
  double slope() const { return a_.value(0, 0); }

private:
  Param a_;
  Matrix x_;
};

/// Batch normalization over the batch dimension. Training uses batch
/// statistics and updates running = momentum * running + (1 - momentum) * batch;
/// inference uses the running statistics.
class BatchNorm final : public Layer {
public:
  explicit BatchNorm(std::size_t width, double momentum = 0.9, double eps = 1e-5);
  std::string kind() const override { return "batchnorm"; }
  Matrix forward(const Matrix &x, bool training) override;
  Matrix backward(const Matrix &dy) override;
  std::vector<Param *> params() override { return {&gamma_, &beta_}; }
  void write(TextWriter &w) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
  static std::unique_ptr<BatchNorm> read(TextReader &r);

private:
  Param gamma_, beta_;
  Eigen::RowVectorXd running_mean_, running_var_;
  double momentum_, eps_;
  Matrix xhat_;
  Eigen::RowVectorXd inv_std_;
};

class Sequential {
public:
  Sequential() = default;
  Sequential(const Sequential &o);
  Sequential &operator=(const Sequential &o);
  Sequential(Sequential &&) = default;
  Sequential &operator=(Sequential &&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Matrix forward(const Matrix &x, bool training);
  Matrix backward(const Matrix &dy);
  std::vector<Param *> params();
  std::size_t out_width(std::size_t in) const;
  std::size_t size() const { return layers_.size(); }
  Layer &layer(std::size_t i) { return *layers_[i]; }
  void write(TextWriter &w) const;
  static Sequential read(TextReader &r);

private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

enum class Activation { Linear, Relu, Prelu };
Activation parse_activation(std::string_view s);
std::string to_string(Activation a);

struct LayerSpec {
  std::size_t width = 1;
  Activation activation = Activation::Relu;
  bool batch_norm = false; // Dense -> BatchNorm -> activation
  friend bool operator==(const LayerSpec &, const LayerSpec &) = default;
};

Sequential build_stack(std::size_t in, const std::vector<LayerSpec> &layers, Rng &rng);

/// A branch sees the input columns whose names start with any of `prefixes`.
struct BranchSpec {
  std::vector<std::string> prefixes;
  std::vector<LayerSpec> layers;
  friend bool operator==(const BranchSpec &, const BranchSpec &) = default;
};

/// Optional parallel branches over column subsets, concatenated into a head.
/// With no branches the head sees every input column.
class Network {
public:
  Network() = default;
  Network(const std::vector<std::string> &columns, const std::vector<BranchSpec> &branches,
          const std::vector<LayerSpec> &head, Rng &rng);
  Matrix forward(const Matrix &x, bool training);
  void backward(const Matrix &dy);
  std::vector<Param *> params();
  void zero_grad();
  std::size_t input_width() const { return input_width_; }
  void write(TextWriter &w) const;
  static Network read(TextReader &r);

  Sequential &head() { return head_; }

private:
  std::size_t input_width_ = 0;
  std::vector<std::vector<Eigen::Index>> branch_columns_;
  std::vector<Sequential> branches_;
  std::vector<Eigen::Index> branch_widths_;
  Sequential head_;
};

enum class Loss { MSE, RMSE, MaskedRMSE };
Loss parse_loss(std::string_view s);
std::string to_string(Loss l);

/// Loss value and gradient with respect to the predictions (n x 1).
/// `groups` (MaskedRMSE only) maps each row to its BSS; the BSS truth is the
/// sum of its member truths.
double loss_and_grad(Loss loss, const Matrix &pred, const Eigen::VectorXd &truth, const std::vector<std::size_t> *groups,
                     Matrix *grad);

/// RMSE over the per-STA errors followed by the per-AP errors, where each AP
/// prediction is the sum of its STAs' predictions.
double masked_loss(std::span<const double> sta_pred, std::span<const double> sta_truth,
                   std::span<const std::size_t> membership, std::span<const double> ap_truth);
/// Gradient of masked_loss with respect to sta_pred.
std::vector<double> masked_loss_grad(std::span<const double> sta_pred, std::span<const double> sta_truth,
                                     std::span<const std::size_t> membership, std::span<const double> ap_truth);

enum class OptimizerKind { Adam, RMSProp };
OptimizerKind parse_optimizer(std::string_view s);
std::string to_string(OptimizerKind o);

class Optimizer {
public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}
  void step(const std::vector<Param *> &params);

private:
  OptimizerKind kind_;
  double lr_;
  long step_ = 0;
};

} // namespace cbnet::nn
