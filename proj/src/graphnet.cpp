#include "cbnet/graphnet.hpp"

#include "cbnet/error.hpp"

#include <cmath>
#include <map>
#include <numeric>

namespace cbnet {

using nn::Matrix;

// ---- network ------------------------------------------------------------

Matrix GraphNetwork::forward(const Matrix &nodes, const Matrix &edges, const std::vector<std::size_t> &src,
                             const std::vector<std::size_t> &dst, bool training) {
  const auto n = nodes.rows(), m = edges.rows();
  if (src.size() != static_cast<std::size_t>(m) || dst.size() != static_cast<std::size_t>(m))
    throw InvalidArgument("graph network: edge list does not match edge features");
  for (std::size_t j = 0; j < src.size(); ++j)
    if (src[j] >= static_cast<std::size_t>(n) || dst[j] >= static_cast<std::size_t>(n))
      throw InvalidArgument("graph network: edge endpoint out of range");
  src_ = src;
  dst_ = dst;
  indegree_.assign(static_cast<std::size_t>(n), 0.0);
  for (auto d : dst) indegree_[d] += 1.0;
  node_widths_.clear();
  edge_widths_.clear();

  Matrix v = nodes, e = edges;
  for (auto &b : blocks) {
    const auto vw = v.cols(), ew = e.cols();
    node_widths_.push_back(vw);
    edge_widths_.push_back(ew);
    Matrix ei(m, ew + 2 * vw);
    for (Eigen::Index j = 0; j < m; ++j) {
      ei.row(j).head(ew) = e.row(j);
      ei.row(j).segment(ew, vw) = v.row(static_cast<Eigen::Index>(src[static_cast<std::size_t>(j)]));
      ei.row(j).tail(vw) = v.row(static_cast<Eigen::Index>(dst[static_cast<std::size_t>(j)]));
    }
    const auto hw = static_cast<Eigen::Index>(b.edge_mlp.out_width(static_cast<std::size_t>(ew + 2 * vw)));
    Matrix e2 = m > 0 ? b.edge_mlp.forward(ei, training) : Matrix(0, hw);
    Matrix agg = Matrix::Zero(n, e2.cols());
    for (Eigen::Index j = 0; j < m; ++j) agg.row(static_cast<Eigen::Index>(dst[static_cast<std::size_t>(j)])) += e2.row(j);
    for (Eigen::Index i = 0; i < n; ++i)
      if (indegree_[static_cast<std::size_t>(i)] > 0) agg.row(i) /= indegree_[static_cast<std::size_t>(i)];
    Matrix vi(n, vw + agg.cols());
    vi << v, agg;
    v = b.node_mlp.forward(vi, training);
    e = std::move(e2);
  }
  return v;
}

void GraphNetwork::backward(const Matrix &d_nodes) {
  const auto m = static_cast<Eigen::Index>(src_.size());
  Matrix dv = d_nodes;
  Matrix de_next; // gradient w.r.t. the edge states produced by block k
  for (std::size_t k = blocks.size(); k-- > 0;) {
    auto &b = blocks[k];
    const auto vw = node_widths_[k], ew = edge_widths_[k];
    const Matrix dvi = b.node_mlp.backward(dv);
    Matrix dv_k = dvi.leftCols(vw);
    const Matrix dagg = dvi.rightCols(dvi.cols() - vw);
    Matrix de2 = de_next.size() ? de_next : Matrix(Matrix::Zero(m, dagg.cols()));
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto d = dst_[static_cast<std::size_t>(j)];
      de2.row(j) += dagg.row(static_cast<Eigen::Index>(d)) / indegree_[d];
    }
    if (m > 0) {
      const Matrix dei = b.edge_mlp.backward(de2);
      de_next = dei.leftCols(ew);
      for (Eigen::Index j = 0; j < m; ++j) {
        dv_k.row(static_cast<Eigen::Index>(src_[static_cast<std::size_t>(j)])) += dei.row(j).segment(ew, vw);
        dv_k.row(static_cast<Eigen::Index>(dst_[static_cast<std::size_t>(j)])) += dei.row(j).tail(vw);
      }
    } else {
      de_next = Matrix(0, ew);
    }
    dv = std::move(dv_k);
  }
}

std::vector<nn::Param *> GraphNetwork::params() {
  std::vector<nn::Param *> out;
  for (auto &b : blocks) {
    for (auto *p : b.edge_mlp.params()) out.push_back(p);
    for (auto *p : b.node_mlp.params()) out.push_back(p);
  }
  return out;
}

void GraphNetwork::zero_grad() {
  for (auto *p : params()) p->zero_grad();
}

void GraphNetwork::write(TextWriter &w) const {
  w.tag("graphnetwork").count(blocks.size()).newline();
  for (const auto &b : blocks) {
    b.edge_mlp.write(w);
    b.node_mlp.write(w);
  }
}

GraphNetwork GraphNetwork::read(TextReader &r) {
  r.expect("graphnetwork");
  GraphNetwork g;
  const auto n = r.count();
  for (std::size_t i = 0; i < n; ++i) {
    GraphNetBlock b;
    b.edge_mlp = nn::Sequential::read(r);
    b.node_mlp = nn::Sequential::read(r);
    g.blocks.push_back(std::move(b));
  }
  return g;
}

namespace {

Matrix rows_matrix(const std::vector<std::vector<double>> &rows, std::size_t width) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void endpoints(const GraphSample &g, std::vector<std::size_t> &src, std::vector<std::size_t> &dst) {
  src.clear();
  dst.clear();
  for (const auto &e : g.edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
  }
}

void fit_scaler(const std::vector<const std::vector<double> *> &rows, std::size_t width, std::vector<double> &mean,
                std::vector<double> &scale) {
  mean.assign(width, 0.0);
  scale.assign(width, 1.0);
  if (rows.empty()) return;
  const double n = static_cast<double>(rows.size());
  for (const auto *r : rows)
    for (std::size_t j = 0; j < width; ++j) mean[j] += (*r)[j];
  for (auto &m : mean) m /= n;
  std::vector<double> var(width, 0.0);
  for (const auto *r : rows)
    for (std::size_t j = 0; j < width; ++j) var[j] += ((*r)[j] - mean[j]) * ((*r)[j] - mean[j]);
  for (std::size_t j = 0; j < width; ++j) {
    const double sd = std::sqrt(var[j] / n);
    scale[j] = sd > 0 ? sd : 1.0;
  }
}

} // namespace

Matrix graphnet_forward(GraphNetwork &net, const GraphSample &g) {
  g.validate();
  std::vector<std::vector<double>> nodes, edges;
  for (const auto &n : g.nodes) nodes.push_back(n.features);
  for (const auto &e : g.edges) edges.push_back(e.features);
  std::vector<std::size_t> src, dst;
  endpoints(g, src, dst);
  return net.forward(rows_matrix(nodes, kGraphNodeWidth), rows_matrix(edges, kGraphEdgeWidth), src, dst, false);
}

std::vector<std::size_t> graph_membership(const GraphSample &g) {
  std::map<std::string, std::size_t> ap_of;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].kind == NodeKind::AP && !ap_of.emplace(g.nodes[i].bss, i).second)
      throw InvalidArgument("graph " + g.deployment_id + " has two APs for BSS " + g.nodes[i].bss);
  std::vector<std::size_t> out(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    auto it = ap_of.find(g.nodes[i].bss);
    if (it == ap_of.end()) throw InvalidArgument("graph " + g.deployment_id + ": no AP for " + g.nodes[i].code);
    out[i] = it->second;
  }
  return out;
}

// ---- trainable model ----------------------------------------------------

GraphNetModel::GraphNetModel(GraphNetSpec spec) : spec_(spec) {
  if (spec.blocks < 1) throw ConfigError("graph network needs at least one block");
  if (spec.hidden < 1) throw ConfigError("graph network hidden width must be >= 1");
  if (!(spec.learning_rate > 0)) throw ConfigError("graph network learning rate must be > 0");
}

Matrix GraphNetModel::node_matrix(const GraphSample &g) const {
  Matrix m(static_cast<Eigen::Index>(g.nodes.size()), static_cast<Eigen::Index>(kGraphNodeWidth));
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (std::size_t j = 0; j < kGraphNodeWidth; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (g.nodes[i].features[j] - node_mean_[j]) / node_scale_[j];
  return m;
}

Matrix GraphNetModel::edge_matrix(const GraphSample &g) const {
  Matrix m(static_cast<Eigen::Index>(g.edges.size()), static_cast<Eigen::Index>(kGraphEdgeWidth));
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    for (std::size_t j = 0; j < kGraphEdgeWidth; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (g.edges[i].features[j] - edge_mean_[j]) / edge_scale_[j];
  return m;
}

void GraphNetModel::fit(const std::vector<GraphSample> &graphs) {
  if (graphs.empty()) throw InvalidArgument("graph network fit on no graphs");
  std::vector<const std::vector<double> *> node_rows, edge_rows;
  double label_sum = 0;
  std::size_t label_count = 0;
  for (const auto &g : graphs) {
    g.validate();
    for (const auto &n : g.nodes) {
      node_rows.push_back(&n.features);
      if (!n.label) throw InvalidArgument("graph " + g.deployment_id + ": node " + n.code + " has no label");
      if (n.kind == NodeKind::STA) {
        label_sum += *n.label;
        ++label_count;
      }
    }
    for (const auto &e : g.edges) edge_rows.push_back(&e.features);
  }
  if (label_count == 0) throw InvalidArgument("graph network fit: no STA nodes");
  fit_scaler(node_rows, kGraphNodeWidth, node_mean_, node_scale_);
  fit_scaler(edge_rows, kGraphEdgeWidth, edge_mean_, edge_scale_);
  target_scale_ = label_sum / static_cast<double>(label_count);
  if (!(target_scale_ > 0)) target_scale_ = 1.0;

  Rng rng(spec_.seed);
  net_ = GraphNetwork{};
  std::size_t vw = kGraphNodeWidth, ew = kGraphEdgeWidth;
  const std::size_t h = spec_.hidden;
  for (std::size_t k = 0; k < spec_.blocks; ++k) {
    GraphNetBlock b;
    b.edge_mlp = nn::build_stack(ew + 2 * vw, {{h, nn::Activation::Relu, false}}, rng);
    std::vector<nn::LayerSpec> node_layers = {{h, nn::Activation::Relu, false}};
    if (k + 1 == spec_.blocks) node_layers.push_back({1, nn::Activation::Linear, false});
    b.node_mlp = nn::build_stack(vw + h, node_layers, rng);
    net_.blocks.push_back(std::move(b));
    vw = h;
    ew = h;
  }

  struct Prepared {
    Matrix nodes, edges;
    std::vector<std::size_t> src, dst, sta, member;
    std::vector<double> sta_truth, ap_truth;
  };
  std::vector<Prepared> data;
  for (const auto &g : graphs) {
    Prepared p;
    p.nodes = node_matrix(g);
    p.edges = edge_matrix(g);
    endpoints(g, p.src, p.dst);
    const auto mem = graph_membership(g);
    std::map<std::size_t, std::size_t> ap_slot;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      if (g.nodes[i].kind == NodeKind::AP) {
        ap_slot[i] = p.ap_truth.size();
        p.ap_truth.push_back(*g.nodes[i].label / target_scale_);
      }
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      if (g.nodes[i].kind == NodeKind::STA) {
        p.sta.push_back(i);
        p.member.push_back(ap_slot.at(mem[i]));
        p.sta_truth.push_back(*g.nodes[i].label / target_scale_);
      }
    if (!p.sta.empty()) data.push_back(std::move(p));
  }

  nn::Optimizer opt(nn::OptimizerKind::Adam, spec_.learning_rate);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> pred;
  for (std::size_t epoch = 0; epoch < spec_.epochs; ++epoch) {
    rng.shuffle(order);
    for (auto gi : order) {
      auto &p = data[gi];
      const Matrix out = net_.forward(p.nodes, p.edges, p.src, p.dst, true);
      pred.resize(p.sta.size());
      for (std::size_t s = 0; s < p.sta.size(); ++s) pred[s] = out(static_cast<Eigen::Index>(p.sta[s]), 0);
      const double loss = nn::masked_loss(pred, p.sta_truth, p.member, p.ap_truth);
      if (!std::isfinite(loss))
        throw TrainingError("graph network diverged at epoch " + std::to_string(epoch + 1) + " (non-finite loss)");
      const auto g = nn::masked_loss_grad(pred, p.sta_truth, p.member, p.ap_truth);
      Matrix d = Matrix::Zero(out.rows(), 1);
      for (std::size_t s = 0; s < p.sta.size(); ++s) d(static_cast<Eigen::Index>(p.sta[s]), 0) = g[s];
      net_.zero_grad();
      net_.backward(d);
      opt.step(net_.params());
    }
  }
  fitted_ = true;
}

std::vector<double> GraphNetModel::predict(const GraphSample &g) const {
  if (!fitted_) throw InvalidArgument("graph network used before fit");
  g.validate();
  GraphNetwork net = net_;
  std::vector<std::size_t> src, dst;
  endpoints(g, src, dst);
  const Matrix out = net.forward(node_matrix(g), edge_matrix(g), src, dst, false);
  const auto mem = graph_membership(g);
  std::vector<double> pred(g.nodes.size(), 0.0);
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].kind == NodeKind::STA) {
      pred[i] = out(static_cast<Eigen::Index>(i), 0) * target_scale_;
      pred[mem[i]] += pred[i];
    }
  return pred;
}

void GraphNetModel::write(TextWriter &w) const {
  if (!fitted_) throw InvalidArgument("graph network used before fit");
  w.tag("graphnet").count(spec_.blocks).count(spec_.hidden).num(spec_.learning_rate).count(spec_.epochs);
  w.count(spec_.seed).num(target_scale_).newline();
  w.nums(node_mean_).newline().nums(node_scale_).newline().nums(edge_mean_).newline().nums(edge_scale_).newline();
  net_.write(w);
}

GraphNetModel GraphNetModel::read(TextReader &r) {
  r.expect("graphnet");
  GraphNetSpec s;
  s.blocks = r.count();
  s.hidden = r.count();
  s.learning_rate = r.num();
  s.epochs = r.count();
  s.seed = r.count();
  GraphNetModel m(s);
  m.target_scale_ = r.num();
  m.node_mean_ = r.nums();
  m.node_scale_ = r.nums();
  m.edge_mean_ = r.nums();
  m.edge_scale_ = r.nums();
  if (m.node_mean_.size() != kGraphNodeWidth || m.node_scale_.size() != kGraphNodeWidth ||
      m.edge_mean_.size() != kGraphEdgeWidth || m.edge_scale_.size() != kGraphEdgeWidth)
    r.fail("graph network scaler widths are wrong");
  m.net_ = GraphNetwork::read(r);
  m.fitted_ = true;
  return m;
}

} // namespace cbnet
