#include "cbnet/nn.hpp"

#include "cbnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cbnet::nn {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Param make_param(Matrix value) {
  Param p;
  p.value = std::move(value);
  p.zero_grad();
  return p;
}

} // namespace

void Layer::write(TextWriter &w) const { w.tag(kind()).newline(); }

// ---- Dense --------------------------------------------------------------

Dense::Dense(std::size_t in, std::size_t out, Rng &rng) {
  if (in == 0 || out == 0) throw InvalidArgument("dense layer needs non-zero widths");
  Matrix w(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  const double sd = std::sqrt(2.0 / static_cast<double>(in));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = sd * rng.normal();
  w_ = make_param(std::move(w));
  b_ = make_param(Matrix::Zero(1, static_cast<Eigen::Index>(out)));
}

Dense::Dense(Matrix weight, Matrix bias) {
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw InvalidArgument("dense bias shape mismatch");
  w_ = make_param(std::move(weight));
  b_ = make_param(std::move(bias));
}

Matrix Dense::forward(const Matrix &x, bool) {
  if (x.cols() != w_.value.rows())
    throw InvalidArgument("dense layer expects " + std::to_string(w_.value.rows()) + " inputs, got " +
                          std::to_string(x.cols()));
  x_ = x;
  Matrix y = x * w_.value;
  y.rowwise() += b_.value.row(0);
  return y;
}

Matrix Dense::backward(const Matrix &dy) {
  w_.grad.noalias() += x_.transpose() * dy;
  b_.grad += dy.colwise().sum();
  return dy * w_.value.transpose();
}

void Dense::write(TextWriter &w) const {
  w.tag("dense").newline();
  w.matrix(w_.value);
  w.matrix(b_.value);
}

// ---- activations --------------------------------------------------------

Matrix Relu::forward(const Matrix &x, bool) {
  x_ = x;
  return x.cwiseMax(0.0);
}

Matrix Relu::backward(const Matrix &dy) { return (x_.array() > 0.0).select(dy, 0.0); }

Prelu::Prelu(double slope) { a_ = make_param(Matrix::Constant(1, 1, slope)); }

Matrix Prelu::forward(const Matrix &x, bool) {
  x_ = x;
  const double a = a_.value(0, 0);
  return (x.array() > 0.0).select(x, a * x);
}

Matrix Prelu::backward(const Matrix &dy) {
  const double a = a_.value(0, 0);
  a_.grad(0, 0) += (x_.array() > 0.0).select(0.0, dy.array() * x_.array()).sum();
  return (x_.array() > 0.0).select(dy, a * dy);
}

void Prelu::write(TextWriter &w) const { w.tag("prelu").num(a_.value(0, 0)).newline(); }

// ---- batch norm ---------------------------------------------------------

BatchNorm::BatchNorm(std::size_t width, double momentum, double eps) : momentum_(momentum), eps_(eps) {
  const auto n = static_cast<Eigen::Index>(width);
  gamma_ = make_param(Matrix::Ones(1, n));
  beta_ = make_param(Matrix::Zero(1, n));
  running_mean_ = Eigen::RowVectorXd::Zero(n);
  running_var_ = Eigen::RowVectorXd::Ones(n);
}

Matrix BatchNorm::forward(const Matrix &x, bool training) {
  if (x.cols() != gamma_.value.cols()) throw InvalidArgument("batch norm width mismatch");
  const double n = static_cast<double>(x.rows());
  Eigen::RowVectorXd mean, var;
  if (training) {
    if (x.rows() < 1) throw InvalidArgument("batch norm on an empty batch");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().sum().matrix() / n;
    const Eigen::RowVectorXd unbiased = n > 1 ? Eigen::RowVectorXd(var * (n / (n - 1))) : var;
    running_mean_ = momentum_ * running_mean_ + (1 - momentum_) * mean;
    running_var_ = momentum_ * running_var_ + (1 - momentum_) * unbiased;
  } else {
    mean = running_mean_;
    var = running_var_;
  }
  inv_std_ = (var.array() + eps_).rsqrt().matrix();
  xhat_ = (x.rowwise() - mean).array().rowwise() * inv_std_.array();
  Matrix y = xhat_.array().rowwise() * gamma_.value.row(0).array();
  y.rowwise() += beta_.value.row(0);
  return y;
}

Matrix BatchNorm::backward(const Matrix &dy) {
  const double n = static_cast<double>(dy.rows());
  gamma_.grad += (dy.array() * xhat_.array()).colwise().sum().matrix();
  beta_.grad += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma_.value.row(0).array();
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat_.array()).colwise().sum().matrix();
  Matrix dx = (n * dxhat).rowwise() - sum_dxhat;
  dx -= (xhat_.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  return (dx.array().rowwise() * (inv_std_.array() / n)).matrix();
}

void BatchNorm::write(TextWriter &w) const {
  w.tag("batchnorm").num(momentum_).num(eps_).newline();
  w.matrix(gamma_.value);
  w.matrix(beta_.value);
  w.matrix(running_mean_);
  w.matrix(running_var_);
}

std::unique_ptr<BatchNorm> BatchNorm::read(TextReader &r) {
  const double momentum = r.num(), eps = r.num();
  Matrix gamma = r.matrix(), beta = r.matrix(), mean = r.matrix(), var = r.matrix();
  if (gamma.rows() != 1 || beta.cols() != gamma.cols() || mean.cols() != gamma.cols() || var.cols() != gamma.cols())
    r.fail("batch norm parameter shapes disagree");
  auto bn = std::make_unique<BatchNorm>(static_cast<std::size_t>(gamma.cols()), momentum, eps);
  bn->gamma_.value = gamma;
  bn->beta_.value = beta;
  bn->running_mean_ = mean.row(0);
  bn->running_var_ = var.row(0);
  return bn;
}

// ---- sequential ---------------------------------------------------------

Sequential::Sequential(const Sequential &o) {
  for (const auto &l : o.layers_) layers_.push_back(l->clone());
}

Sequential &Sequential::operator=(const Sequential &o) {
  if (this != &o) {
    layers_.clear();
    for (const auto &l : o.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Matrix Sequential::forward(const Matrix &x, bool training) {
  Matrix h = x;
  for (auto &l : layers_) h = l->forward(h, training);
  return h;
}

Matrix Sequential::backward(const Matrix &dy) {
  Matrix g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param *> Sequential::params() {
  std::vector<Param *> out;
  for (auto &l : layers_)
    for (auto *p : l->params()) out.push_back(p);
  return out;
}

std::size_t Sequential::out_width(std::size_t in) const {
  for (const auto &l : layers_) in = l->out_width(in);
  return in;
}

void Sequential::write(TextWriter &w) const {
  w.tag("sequential").count(layers_.size()).newline();
  for (const auto &l : layers_) l->write(w);
}

Sequential Sequential::read(TextReader &r) {
  r.expect("sequential");
  const auto n = r.count();
  Sequential s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = r.word();
    if (kind == "dense") {
      Matrix w = r.matrix(), b = r.matrix();
      if (b.rows() != 1 || b.cols() != w.cols()) r.fail("dense parameter shapes disagree");
      s.add(std::make_unique<Dense>(std::move(w), std::move(b)));
    } else if (kind == "relu") {
      s.add(std::make_unique<Relu>());
    } else if (kind == "prelu") {
      s.add(std::make_unique<Prelu>(r.num()));
    } else if (kind == "batchnorm") {
      s.add(BatchNorm::read(r));
    } else {
      r.fail("unknown layer kind '" + kind + "'");
    }
  }
  return s;
}

Activation parse_activation(std::string_view s) {
  const auto t = lower(s);
  if (t == "linear") return Activation::Linear;
  if (t == "relu") return Activation::Relu;
  if (t == "prelu") return Activation::Prelu;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected linear, relu or prelu)");
}

std::string to_string(Activation a) {
  switch (a) {
  case Activation::Linear: return "linear";
  case Activation::Relu: return "relu";
  case Activation::Prelu: return "prelu";
  }
  return "?";
}

Sequential build_stack(std::size_t in, const std::vector<LayerSpec> &layers, Rng &rng) {
  Sequential s;
  for (const auto &spec : layers) {
    s.add(std::make_unique<Dense>(in, spec.width, rng));
    if (spec.batch_norm) s.add(std::make_unique<BatchNorm>(spec.width));
    if (spec.activation == Activation::Relu) s.add(std::make_unique<Relu>());
    if (spec.activation == Activation::Prelu) s.add(std::make_unique<Prelu>());
    in = spec.width;
  }
  return s;
}

// ---- network ------------------------------------------------------------

Network::Network(const std::vector<std::string> &columns, const std::vector<BranchSpec> &branches,
                 const std::vector<LayerSpec> &head, Rng &rng)
    : input_width_(columns.size()) {
  if (head.empty()) throw ConfigError("network needs at least one head layer");
  std::size_t head_in = columns.size();
  if (!branches.empty()) {
    head_in = 0;
    for (const auto &b : branches) {
      std::vector<Eigen::Index> cols;
      for (std::size_t j = 0; j < columns.size(); ++j)
        for (const auto &p : b.prefixes)
          if (columns[j].rfind(p, 0) == 0) {
            cols.push_back(static_cast<Eigen::Index>(j));
            break;
          }
      if (cols.empty()) throw ConfigError("network branch matches no input column");
      if (b.layers.empty()) throw ConfigError("network branch has no layers");
      branch_columns_.push_back(cols);
      branches_.push_back(build_stack(cols.size(), b.layers, rng));
      branch_widths_.push_back(static_cast<Eigen::Index>(b.layers.back().width));
      head_in += b.layers.back().width;
    }
  }
  head_ = build_stack(head_in, head, rng);
}

Matrix Network::forward(const Matrix &x, bool training) {
  if (static_cast<std::size_t>(x.cols()) != input_width_)
    throw InvalidArgument("network expects " + std::to_string(input_width_) + " inputs, got " +
                          std::to_string(x.cols()));
  if (branches_.empty()) return head_.forward(x, training);
  Eigen::Index total = 0;
  for (auto w : branch_widths_) total += w;
  Matrix cat(x.rows(), total);
  Eigen::Index at = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    Matrix sub(x.rows(), static_cast<Eigen::Index>(branch_columns_[b].size()));
    for (std::size_t k = 0; k < branch_columns_[b].size(); ++k)
      sub.col(static_cast<Eigen::Index>(k)) = x.col(branch_columns_[b][k]);
    cat.middleCols(at, branch_widths_[b]) = branches_[b].forward(sub, training);
    at += branch_widths_[b];
  }
  return head_.forward(cat, training);
}

void Network::backward(const Matrix &dy) {
  const Matrix dcat = head_.backward(dy);
  Eigen::Index at = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    branches_[b].backward(dcat.middleCols(at, branch_widths_[b]));
    at += branch_widths_[b];
  }
}

std::vector<Param *> Network::params() {
  std::vector<Param *> out;
  for (auto &b : branches_)
    for (auto *p : b.params()) out.push_back(p);
  for (auto *p : head_.params()) out.push_back(p);
  return out;
}

void Network::zero_grad() {
  for (auto *p : params()) p->zero_grad();
}

void Network::write(TextWriter &w) const {
  w.tag("network").count(input_width_).count(branches_.size()).newline();
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    w.tag("branch").count(branch_columns_[b].size());
    for (auto c : branch_columns_[b]) w.count(static_cast<std::size_t>(c));
    w.count(static_cast<std::size_t>(branch_widths_[b])).newline();
    branches_[b].write(w);
  }
  head_.write(w);
}

Network Network::read(TextReader &r) {
  r.expect("network");
  Network n;
  n.input_width_ = r.count();
  const auto nb = r.count();
  for (std::size_t b = 0; b < nb; ++b) {
    r.expect("branch");
    std::vector<Eigen::Index> cols(r.count());
    for (auto &c : cols) {
      c = static_cast<Eigen::Index>(r.count());
      if (static_cast<std::size_t>(c) >= n.input_width_) r.fail("branch column out of range");
    }
    n.branch_columns_.push_back(cols);
    n.branch_widths_.push_back(static_cast<Eigen::Index>(r.count()));
    n.branches_.push_back(Sequential::read(r));
  }
  n.head_ = Sequential::read(r);
  return n;
}

// ---- losses -------------------------------------------------------------

Loss parse_loss(std::string_view s) {
  const auto t = lower(s);
  if (t == "mse") return Loss::MSE;
  if (t == "rmse") return Loss::RMSE;
  if (t == "maskedrmse" || t == "masked") return Loss::MaskedRMSE;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected mse, rmse or maskedRMSE)");
}

std::string to_string(Loss l) {
  switch (l) {
  case Loss::MSE: return "mse";
  case Loss::RMSE: return "rmse";
  case Loss::MaskedRMSE: return "maskedRMSE";
  }
  return "?";
}

double masked_loss(std::span<const double> sta_pred, std::span<const double> sta_truth,
                   std::span<const std::size_t> membership, std::span<const double> ap_truth) {
  if (sta_pred.empty() || ap_truth.empty()) throw InvalidArgument("masked loss on empty input");
  if (sta_truth.size() != sta_pred.size() || membership.size() != sta_pred.size())
    throw InvalidArgument("masked loss: STA predictions, truth and membership differ in length");
  std::vector<double> ap_pred(ap_truth.size(), 0.0);
  double sum = 0;
  for (std::size_t i = 0; i < sta_pred.size(); ++i) {
    if (membership[i] >= ap_truth.size()) throw InvalidArgument("masked loss: membership out of range");
    ap_pred[membership[i]] += sta_pred[i];
    const double e = sta_pred[i] - sta_truth[i];
    sum += e * e;
  }
  for (std::size_t a = 0; a < ap_truth.size(); ++a) {
    const double e = ap_pred[a] - ap_truth[a];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(sta_pred.size() + ap_truth.size()));
}

std::vector<double> masked_loss_grad(std::span<const double> sta_pred, std::span<const double> sta_truth,
                                     std::span<const std::size_t> membership, std::span<const double> ap_truth) {
  const double l = masked_loss(sta_pred, sta_truth, membership, ap_truth);
  std::vector<double> g(sta_pred.size(), 0.0);
  if (l == 0.0) return g;
  std::vector<double> ap_err(ap_truth.size());
  for (std::size_t a = 0; a < ap_truth.size(); ++a) ap_err[a] = -ap_truth[a];
  for (std::size_t i = 0; i < sta_pred.size(); ++i) ap_err[membership[i]] += sta_pred[i];
  const double denom = static_cast<double>(sta_pred.size() + ap_truth.size()) * l;
  for (std::size_t i = 0; i < sta_pred.size(); ++i)
    g[i] = ((sta_pred[i] - sta_truth[i]) + ap_err[membership[i]]) / denom;
  return g;
}

double loss_and_grad(Loss loss, const Matrix &pred, const Eigen::VectorXd &truth, const std::vector<std::size_t> *groups,
                     Matrix *grad) {
  const auto n = pred.rows();
  if (pred.cols() != 1 || truth.size() != n || n == 0) throw InvalidArgument("loss: prediction/truth shape mismatch");
  if (loss == Loss::MaskedRMSE) {
    if (!groups || groups->size() != static_cast<std::size_t>(n))
      throw InvalidArgument("masked loss needs a group for every row");
    std::map<std::size_t, std::size_t> compact;
    std::vector<std::size_t> member(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < member.size(); ++i)
      member[i] = compact.emplace((*groups)[i], compact.size()).first->second;
    std::vector<double> ap_truth(compact.size(), 0.0);
    for (std::size_t i = 0; i < member.size(); ++i) ap_truth[member[i]] += truth(static_cast<Eigen::Index>(i));
    std::span<const double> p(pred.data(), static_cast<std::size_t>(n)), t(truth.data(), static_cast<std::size_t>(n));
    if (grad) {
      const auto g = masked_loss_grad(p, t, member, ap_truth);
      grad->resize(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) (*grad)(i, 0) = g[static_cast<std::size_t>(i)];
    }
    return masked_loss(p, t, member, ap_truth);
  }
  const Eigen::VectorXd e = pred.col(0) - truth;
  const double mse = e.squaredNorm() / static_cast<double>(n);
  if (loss == Loss::MSE) {
    if (grad) *grad = 2.0 * e / static_cast<double>(n);
    return mse;
  }
  const double rmse = std::sqrt(mse);
  if (grad) *grad = rmse > 0 ? Matrix(e / (static_cast<double>(n) * rmse)) : Matrix(Matrix::Zero(n, 1));
  return rmse;
}

// ---- optimizers ---------------------------------------------------------

OptimizerKind parse_optimizer(std::string_view s) {
  const auto t = lower(s);
  if (t == "adam") return OptimizerKind::Adam;
  if (t == "rmsprop") return OptimizerKind::RMSProp;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected adam or rmsprop)");
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::Adam ? "adam" : "rmsprop"; }

void Optimizer::step(const std::vector<Param *> &params) {
  ++step_;
  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  constexpr double rho = 0.9, rms_eps = 1e-7;
  for (auto *p : params) {
    if (p->m.size() != p->value.size()) p->m = Matrix::Zero(p->value.rows(), p->value.cols());
    if (p->v.size() != p->value.size()) p->v = Matrix::Zero(p->value.rows(), p->value.cols());
    if (kind_ == OptimizerKind::Adam) {
      p->m = b1 * p->m + (1 - b1) * p->grad;
      p->v = b2 * p->v + (1 - b2) * p->grad.cwiseAbs2();
      const double c1 = 1 - std::pow(b1, static_cast<double>(step_));
      const double c2 = 1 - std::pow(b2, static_cast<double>(step_));
      p->value.array() -= lr_ * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + adam_eps);
    } else {
      p->v = rho * p->v + (1 - rho) * p->grad.cwiseAbs2();
      p->value.array() -= lr_ * p->grad.array() / (p->v.array().sqrt() + rms_eps);
    }
  }
}

} // namespace cbnet::nn
