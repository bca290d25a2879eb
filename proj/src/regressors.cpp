#include "cbnet/regressors.hpp"

#include "cbnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cbnet {

DataView::DataView(std::span<const double> v, std::size_t r, std::size_t c) : values(v), rows(r), cols(c) {
  if (v.size() != r * c) throw InvalidArgument("data view size does not match its shape");
}

// ---- tree ---------------------------------------------------------------

namespace {

class TreeBuilder {
public:
  TreeBuilder(const DataView &x, std::span<const double> y, std::span<const double> w, const TreeParams &p, Rng &rng)
      : x_(x), y_(y), w_(w), p_(p), rng_(rng) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < x.rows; ++i)
      if (w[i] > 0) active.push_back(i);
    if (active.empty()) throw InvalidArgument("tree fit on an empty sample");
    order_.assign(x.cols, active);
    for (std::size_t f = 0; f < x.cols; ++f)
      std::stable_sort(order_[f].begin(), order_[f].end(),
                       [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
    left_.assign(x.rows, 0);
    buffer_.resize(active.size());
    features_.resize(x.cols);
    std::iota(features_.begin(), features_.end(), 0);
  }

  template <typename NodeT> void build(std::vector<NodeT> &nodes) { grow(nodes, 0, order_.empty() ? 0 : order_[0].size(), 0); }

private:
  template <typename NodeT> int grow(std::vector<NodeT> &nodes, std::size_t lo, std::size_t hi, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const auto &rows = order_.empty() ? empty_ : order_[0];
    double W = 0, S = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      W += w_[rows[k]];
      S += w_[rows[k]] * y_[rows[k]];
    }
    const double mean = S / W;
    nodes[id].value = mean;
    double sse = 0;
    for (std::size_t k = lo; k < hi; ++k) sse += w_[rows[k]] * (y_[rows[k]] - mean) * (y_[rows[k]] - mean);
    if (depth >= p_.max_depth || hi - lo < 2 || W < 2 * p_.min_samples_leaf || !(sse > 0) || x_.cols == 0) return id;

    std::size_t nf = x_.cols;
    if (p_.max_features > 0 && p_.max_features < x_.cols) {
      nf = p_.max_features;
      for (std::size_t i = 0; i < nf; ++i) std::swap(features_[i], features_[i + rng_.index(x_.cols - i)]);
    }
    double best_gain = 1e-12 * sse;
    int best_f = -1;
    double best_thr = 0;
    for (std::size_t fi = 0; fi < nf; ++fi) {
      const std::size_t f = features_[fi];
      const auto &ord = order_[f];
      double wl = 0, sl = 0; // sl: sum of w * (y - mean) on the left
      for (std::size_t k = lo; k + 1 < hi; ++k) {
        const std::size_t r = ord[k];
        wl += w_[r];
        sl += w_[r] * (y_[r] - mean);
        const double a = x_(r, f), b = x_(ord[k + 1], f);
        if (!(a < b)) continue;
        const double wr = W - wl;
        if (wl < p_.min_samples_leaf || wr < p_.min_samples_leaf) continue;
        const double gain = sl * sl * W / (wl * wr);
        // Equal partitions reached through different features differ only by
        // rounding; keep the first one.
        if (gain > best_gain * (1 + 1e-10)) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_thr = a + (b - a) / 2;
          if (!(a < best_thr)) best_thr = b;
        }
      }
    }
    if (p_.max_features > 0 && p_.max_features < x_.cols) std::sort(features_.begin(), features_.end());
    if (best_f < 0) return id;

    std::size_t nl = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t r = order_[0][k];
      left_[r] = x_(r, static_cast<std::size_t>(best_f)) < best_thr;
      nl += left_[r];
    }
    for (auto &ord : order_) {
      std::size_t a = lo, b = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        if (left_[ord[k]]) ord[a++] = ord[k];
        else buffer_[b++] = ord[k];
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(b), ord.begin() + static_cast<std::ptrdiff_t>(a));
    }
    nodes[id].feature = best_f;
    nodes[id].threshold = best_thr;
    const int l = grow(nodes, lo, lo + nl, depth + 1);
    const int r = grow(nodes, lo + nl, hi, depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  const DataView &x_;
  std::span<const double> y_, w_;
  const TreeParams &p_;
  Rng &rng_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<char> left_;
  std::vector<std::size_t> buffer_, features_;
  const std::vector<std::size_t> empty_;
};

} // namespace

void RegressionTree::fit(const DataView &x, std::span<const double> y, std::span<const double> weights,
                         const TreeParams &params, Rng &rng) {
  if (y.size() != x.rows || weights.size() != x.rows) throw InvalidArgument("tree fit: labels do not match rows");
  if (params.max_depth < 0) throw ConfigError("tree max_depth must be >= 0");
  if (!(params.min_samples_leaf > 0)) throw ConfigError("tree min_samples_leaf must be > 0");
  std::vector<Node> nodes;
  if (x.cols == 0) {
    // No features: a single leaf.
    double W = 0, S = 0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      W += weights[i];
      S += weights[i] * y[i];
    }
    if (!(W > 0)) throw InvalidArgument("tree fit on an empty sample");
    nodes.push_back({-1, 0, -1, -1, S / W});
  } else {
    TreeBuilder(x, y, weights, params, rng).build(nodes);
  }
  nodes_ = std::move(nodes);
}

void RegressionTree::fit(const DataView &x, std::span<const double> y, const TreeParams &params) {
  std::vector<double> w(x.rows, 1.0);
  Rng rng(0);
  fit(x, y, w, params, rng);
}

double RegressionTree::predict(std::span<const double> row) const {
  if (nodes_.empty()) throw InvalidArgument("tree used before fit");
  int n = 0;
  while (nodes_[n].feature >= 0) n = row[static_cast<std::size_t>(nodes_[n].feature)] < nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
  return nodes_[n].value;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
  }
  return best;
}

void RegressionTree::write(TextWriter &w) const {
  w.tag("tree").count(nodes_.size()).newline();
  for (const auto &n : nodes_) {
    w.word(std::to_string(n.feature)).num(n.threshold).word(std::to_string(n.left)).word(std::to_string(n.right));
    w.num(n.value).newline();
  }
}

RegressionTree RegressionTree::read(TextReader &r) {
  r.expect("tree");
  RegressionTree t;
  t.nodes_.resize(r.count());
  const int n = static_cast<int>(t.nodes_.size());
  for (auto &node : t.nodes_) {
    node.feature = std::stoi(r.word());
    node.threshold = r.num();
    node.left = std::stoi(r.word());
    node.right = std::stoi(r.word());
    node.value = r.num();
    if (node.feature >= 0 && (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n))
      r.fail("tree child index out of range");
  }
  if (t.nodes_.empty()) r.fail("tree has no nodes");
  return t;
}

// ---- forest -------------------------------------------------------------

RandomForest::RandomForest(ForestParams p) : params_(p) {
  if (p.trees < 1) throw ConfigError("forest needs at least one tree");
  if (p.max_depth < 0) throw ConfigError("forest max_depth must be >= 0");
}

void RandomForest::fit(const DataView &x, std::span<const double> y) {
  if (x.rows < 2) throw InvalidArgument("forest fit needs at least two rows");
  if (y.size() != x.rows) throw InvalidArgument("forest fit: labels do not match rows");
  TreeParams tp;
  tp.max_depth = params_.max_depth;
  tp.min_samples_leaf = params_.min_samples_leaf;
  tp.max_features =
      params_.sqrt_features ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols)))) : 0;
  trees_.assign(params_.trees, {});
  std::vector<double> w(x.rows);
  for (std::size_t t = 0; t < params_.trees; ++t) {
    Rng rng(derive_seed(params_.seed, t));
    if (params_.bootstrap) {
      std::fill(w.begin(), w.end(), 0.0);
      for (std::size_t i = 0; i < x.rows; ++i) w[rng.index(x.rows)] += 1.0;
    } else {
      std::fill(w.begin(), w.end(), 1.0);
    }
    trees_[t].fit(x, y, w, tp, rng);
  }
}

double RandomForest::predict(std::span<const double> row) const {
  if (trees_.empty()) throw InvalidArgument("forest used before fit");
  double s = 0;
  for (const auto &t : trees_) s += t.predict(row);
  return s / static_cast<double>(trees_.size());
}

void RandomForest::write(TextWriter &w) const {
  w.tag("forest").count(params_.trees).word(std::to_string(params_.max_depth)).num(params_.min_samples_leaf);
  w.count(params_.bootstrap).count(params_.sqrt_features).count(params_.seed).count(trees_.size()).newline();
  for (const auto &t : trees_) t.write(w);
}

RandomForest RandomForest::read(TextReader &r) {
  r.expect("forest");
  ForestParams p;
  p.trees = r.count();
  p.max_depth = std::stoi(r.word());
  p.min_samples_leaf = r.num();
  p.bootstrap = r.count() != 0;
  p.sqrt_features = r.count() != 0;
  p.seed = r.count();
  RandomForest f(p);
  const auto n = r.count();
  for (std::size_t i = 0; i < n; ++i) f.trees_.push_back(RegressionTree::read(r));
  return f;
}

// ---- boosting -----------------------------------------------------------

GradientBoosting::GradientBoosting(GbmParams p) : params_(p) {
  if (p.rounds < 1) throw ConfigError("gradient boosting needs at least one round");
  if (!(p.shrinkage > 0 && p.shrinkage <= 1)) throw ConfigError("gradient boosting shrinkage must be in (0, 1]");
  if (p.max_depth < 0) throw ConfigError("gradient boosting max_depth must be >= 0");
}

void GradientBoosting::fit(const DataView &x, std::span<const double> y) {
  if (x.rows < 1 || y.size() != x.rows) throw InvalidArgument("gradient boosting fit: labels do not match rows");
  TreeParams tp;
  tp.max_depth = params_.max_depth;
  tp.min_samples_leaf = params_.min_samples_leaf;
  base_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  lo_ = *lo;
  hi_ = *hi;
  std::vector<double> f(x.rows, base_), resid(x.rows), w(x.rows, 1.0);
  auto mse = [&] {
    double s = 0;
    for (std::size_t i = 0; i < x.rows; ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
    return s / static_cast<double>(x.rows);
  };
  trees_.clear();
  training_mse_ = {mse()};
  Rng rng(0);
  for (std::size_t m = 0; m < params_.rounds; ++m) {
    for (std::size_t i = 0; i < x.rows; ++i) resid[i] = y[i] - f[i];
    RegressionTree t;
    t.fit(x, resid, w, tp, rng);
    for (std::size_t i = 0; i < x.rows; ++i) f[i] += params_.shrinkage * t.predict(x.row(i));
    trees_.push_back(std::move(t));
    training_mse_.push_back(mse());
  }
  fitted_ = true;
}

double GradientBoosting::predict(std::span<const double> row) const {
  if (!fitted_) throw InvalidArgument("gradient boosting used before fit");
  double s = base_;
  for (const auto &t : trees_) s += params_.shrinkage * t.predict(row);
  return std::clamp(s, lo_, hi_);
}

void GradientBoosting::write(TextWriter &w) const {
  w.tag("gbm").count(params_.rounds).word(std::to_string(params_.max_depth)).num(params_.shrinkage);
  w.num(params_.min_samples_leaf).num(base_).num(lo_).num(hi_).count(trees_.size()).newline();
  for (const auto &t : trees_) t.write(w);
}

GradientBoosting GradientBoosting::read(TextReader &r) {
  r.expect("gbm");
  GbmParams p;
  p.rounds = r.count();
  p.max_depth = std::stoi(r.word());
  p.shrinkage = r.num();
  p.min_samples_leaf = r.num();
  GradientBoosting g(p);
  g.base_ = r.num();
  g.lo_ = r.num();
  g.hi_ = r.num();
  const auto n = r.count();
  for (std::size_t i = 0; i < n; ++i) g.trees_.push_back(RegressionTree::read(r));
  g.fitted_ = true;
  return g;
}

// ---- knn ----------------------------------------------------------------

Knn::Knn(std::size_t k) : k_(k) {
  if (k < 1) throw ConfigError("knn needs k >= 1");
}

void Knn::fit(const DataView &x, std::span<const double> y) {
  if (y.size() != x.rows) throw InvalidArgument("knn fit: labels do not match rows");
  if (k_ > x.rows) throw InvalidArgument("knn: k = " + std::to_string(k_) + " exceeds " + std::to_string(x.rows) + " training rows");
  cols_ = x.cols;
  mean_.assign(cols_, 0.0);
  scale_.assign(cols_, 1.0);
  const double n = static_cast<double>(x.rows);
  for (std::size_t j = 0; j < cols_; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < x.rows; ++i) m += x(i, j);
    m /= n;
    double v = 0;
    for (std::size_t i = 0; i < x.rows; ++i) v += (x(i, j) - m) * (x(i, j) - m);
    mean_[j] = m;
    const double sd = std::sqrt(v / n);
    scale_[j] = sd > 0 ? sd : 1.0;
  }
  train_.resize(x.rows * cols_);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < cols_; ++j) train_[i * cols_ + j] = (x(i, j) - mean_[j]) / scale_[j];
  labels_.assign(y.begin(), y.end());
  fitted_ = true;
}

std::vector<std::size_t> Knn::neighbours(std::span<const double> row) const {
  if (!fitted_) throw InvalidArgument("knn scaler used before fit");
  if (row.size() != cols_) throw InvalidArgument("knn query has the wrong width");
  std::vector<double> q(cols_);
  for (std::size_t j = 0; j < cols_; ++j) q[j] = (row[j] - mean_[j]) / scale_[j];
  const std::size_t n = labels_.size();
  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    const double *t = &train_[i * cols_];
    for (std::size_t j = 0; j < cols_; ++j) s += (t[j] - q[j]) * (t[j] - q[j]);
    d[i] = {s, i};
  }
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k_), d.end());
  std::vector<std::size_t> out(k_);
  for (std::size_t i = 0; i < k_; ++i) out[i] = d[i].second;
  return out;
}

double Knn::predict(std::span<const double> row) const {
  double s = 0;
  for (auto i : neighbours(row)) s += labels_[i];
  return s / static_cast<double>(k_);
}

void Knn::write(TextWriter &w) const {
  if (!fitted_) throw InvalidArgument("knn used before fit");
  w.tag("knn").count(k_).count(cols_).count(labels_.size()).newline();
  w.nums(mean_).newline().nums(scale_).newline().nums(labels_).newline().nums(train_).newline();
}

Knn Knn::read(TextReader &r) {
  r.expect("knn");
  Knn k(r.count());
  k.cols_ = r.count();
  const auto n = r.count();
  k.mean_ = r.nums();
  k.scale_ = r.nums();
  k.labels_ = r.nums();
  k.train_ = r.nums();
  if (k.mean_.size() != k.cols_ || k.scale_.size() != k.cols_ || k.labels_.size() != n ||
      k.train_.size() != n * k.cols_ || k.k_ > n)
    r.fail("knn block sizes disagree");
  k.fitted_ = true;
  return k;
}

} // namespace cbnet
