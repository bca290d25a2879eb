#include "cbnet/predictors.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/error.hpp"
#include "cbnet/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <variant>

namespace cbnet {

using nn::Matrix;

std::string to_string(Family f) {
  switch (f) {
  case Family::MLP: return "mlp";
  case Family::RandomForest: return "forest";
  case Family::KNN: return "knn";
  case Family::GBM: return "gbm";
  case Family::GraphNet: return "graphnet";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  for (auto f : {Family::MLP, Family::RandomForest, Family::KNN, Family::GBM, Family::GraphNet})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown model family '" + std::string(s) + "' (expected mlp, forest, knn, gbm or graphnet)");
}

// ---- spec text ------------------------------------------------------------

namespace {

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::string join_on(const std::vector<std::string> &parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

double to_double(const std::string &key, const std::string &v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("model." + key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t to_uint(const std::string &key, const std::string &v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || v.empty())
    throw ConfigError("model." + key + ": '" + v + "' is not a non-negative integer");
  return out;
}

int to_int(const std::string &key, const std::string &v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || v.empty())
    throw ConfigError("model." + key + ": '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("model." + key + ": '" + v + "' is not true or false");
}

std::string yes(bool b) { return b ? "true" : "false"; }

std::string format_branches(const std::vector<nn::BranchSpec> &branches) {
  std::vector<std::string> parts;
  for (const auto &b : branches) parts.push_back(join_on(b.prefixes, '|') + "=" + format_layers(b.layers));
  return join_on(parts, ';');
}

std::vector<nn::BranchSpec> parse_branches(const std::string &text) {
  std::vector<nn::BranchSpec> out;
  for (const auto &part : split_on(text, ';')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("model.mlp.branches: '" + part + "' is not PREFIX|PREFIX=LAYERS");
    nn::BranchSpec b;
    b.prefixes = split_on(std::string_view(part).substr(0, eq), '|');
    b.layers = parse_layers(std::string_view(part).substr(eq + 1));
    out.push_back(std::move(b));
  }
  return out;
}

} // namespace

std::string format_layers(const std::vector<nn::LayerSpec> &layers) {
  std::vector<std::string> parts;
  for (const auto &l : layers)
    parts.push_back(std::to_string(l.width) + ":" + nn::to_string(l.activation) + (l.batch_norm ? ":bn" : ""));
  return join_on(parts, ',');
}

std::vector<nn::LayerSpec> parse_layers(std::string_view text) {
  std::vector<nn::LayerSpec> out;
  for (const auto &part : split_on(text, ',')) {
    const auto f = split_on(part, ':');
    if (f.size() < 2 || f.size() > 3 || (f.size() == 3 && f[2] != "bn"))
      throw ConfigError("layer '" + part + "' is not WIDTH:ACTIVATION[:bn]");
    nn::LayerSpec l;
    l.width = to_uint("layers", f[0]);
    if (l.width == 0) throw ConfigError("layer '" + part + "' has zero width");
    l.activation = nn::parse_activation(f[1]);
    l.batch_norm = f.size() == 3;
    out.push_back(l);
  }
  return out;
}

void MlpSpec::validate() const {
  if (head.empty()) throw ConfigError("mlp needs at least one head layer");
  std::size_t hidden = head.size() - 1;
  for (const auto &b : branches) {
    if (b.prefixes.empty() || b.layers.empty()) throw ConfigError("mlp branch needs prefixes and layers");
    hidden += b.layers.size();
  }
  if (hidden < 1) throw ConfigError("mlp needs at least one hidden layer");
  if (head.back().width != 1) throw ConfigError("mlp output layer must have width 1");
  if (!(learning_rate > 0)) throw ConfigError("mlp learning rate must be > 0");
  if (epochs < 1) throw ConfigError("mlp needs at least one epoch");
  if (batch_size < 1) throw ConfigError("mlp batch size must be >= 1");
}

void ModelSpec::validate() const {
  if (!(min_variance >= 0)) throw ConfigError("model.min_variance must be >= 0");
  switch (family) {
  case Family::MLP: mlp.validate(); break;
  case Family::RandomForest: RandomForest{forest}; break;
  case Family::GBM: GradientBoosting{gbm}; break;
  case Family::KNN: Knn{knn_k}; break;
  case Family::GraphNet: GraphNetModel{graph}; break;
  }
}

std::vector<std::pair<std::string, std::string>> ModelSpec::to_kv() const {
  return {
      {"family", to_string(family)},
      {"granularity", to_string(granularity)},
      {"columns", join_on(columns, ',')},
      {"yeo_johnson", yes(yeo_johnson)},
      {"min_variance", csv::format(min_variance)},
      {"seed", std::to_string(seed)},
      {"mlp.branches", format_branches(mlp.branches)},
      {"mlp.head", format_layers(mlp.head)},
      {"mlp.loss", nn::to_string(mlp.loss)},
      {"mlp.optimizer", nn::to_string(mlp.optimizer)},
      {"mlp.lr", csv::format(mlp.learning_rate)},
      {"mlp.epochs", std::to_string(mlp.epochs)},
      {"mlp.batch", std::to_string(mlp.batch_size)},
      {"mlp.normalize_target", yes(mlp.normalize_target)},
      {"forest.trees", std::to_string(forest.trees)},
      {"forest.depth", std::to_string(forest.max_depth)},
      {"forest.min_leaf", csv::format(forest.min_samples_leaf)},
      {"forest.bootstrap", yes(forest.bootstrap)},
      {"gbm.rounds", std::to_string(gbm.rounds)},
      {"gbm.depth", std::to_string(gbm.max_depth)},
      {"gbm.shrinkage", csv::format(gbm.shrinkage)},
      {"gbm.min_leaf", csv::format(gbm.min_samples_leaf)},
      {"knn.k", std::to_string(knn_k)},
      {"graph.blocks", std::to_string(graph.blocks)},
      {"graph.hidden", std::to_string(graph.hidden)},
      {"graph.lr", csv::format(graph.learning_rate)},
      {"graph.epochs", std::to_string(graph.epochs)},
  };
}

void ModelSpec::set(const std::string &key, const std::string &v) {
  if (key == "family") family = parse_family(v);
  else if (key == "granularity") granularity = parse_granularity(v);
  else if (key == "columns") columns = split_on(v, ',');
  else if (key == "yeo_johnson") yeo_johnson = to_bool(key, v);
  else if (key == "min_variance") min_variance = to_double(key, v);
  else if (key == "seed") seed = to_uint(key, v);
  else if (key == "mlp.branches") mlp.branches = parse_branches(v);
  else if (key == "mlp.head") mlp.head = parse_layers(v);
  else if (key == "mlp.loss") mlp.loss = nn::parse_loss(v);
  else if (key == "mlp.optimizer") mlp.optimizer = nn::parse_optimizer(v);
  else if (key == "mlp.lr") mlp.learning_rate = to_double(key, v);
  else if (key == "mlp.epochs") mlp.epochs = to_uint(key, v);
  else if (key == "mlp.batch") mlp.batch_size = to_uint(key, v);
  else if (key == "mlp.normalize_target") mlp.normalize_target = to_bool(key, v);
  else if (key == "forest.trees") forest.trees = to_uint(key, v);
  else if (key == "forest.depth") forest.max_depth = to_int(key, v);
  else if (key == "forest.min_leaf") forest.min_samples_leaf = to_double(key, v);
  else if (key == "forest.bootstrap") forest.bootstrap = to_bool(key, v);
  else if (key == "gbm.rounds") gbm.rounds = to_uint(key, v);
  else if (key == "gbm.depth") gbm.max_depth = to_int(key, v);
  else if (key == "gbm.shrinkage") gbm.shrinkage = to_double(key, v);
  else if (key == "gbm.min_leaf") gbm.min_samples_leaf = to_double(key, v);
  else if (key == "knn.k") knn_k = to_uint(key, v);
  else if (key == "graph.blocks") graph.blocks = to_uint(key, v);
  else if (key == "graph.hidden") graph.hidden = to_uint(key, v);
  else if (key == "graph.lr") graph.learning_rate = to_double(key, v);
  else if (key == "graph.epochs") graph.epochs = to_uint(key, v);
  else throw ConfigError("unknown model key 'model." + key + "'");
  forest.seed = seed;
  graph.seed = seed;
}

// ---- presets --------------------------------------------------------------

std::vector<std::string> preset_names() {
  return {"ramon", "uc3m", "netintels-ann", "netintels-rf", "netintels-knn", "stc", "atari"};
}

ModelSpec preset(const std::string &name) {
  ModelSpec s;
  auto apply = [&](std::initializer_list<std::pair<const char *, const char *>> kv) {
    for (const auto &[k, v] : kv) s.set(k, v);
  };
  const char *netintels_columns = "x,y,primary#,min#,max#,sinr,rssi";
  if (name == "ramon") {
    apply({{"family", "mlp"},
           {"granularity", "bss"},
           {"columns", "rssi_,sinr_,distance_,ap_airtime_ch"},
           {"mlp.branches", "rssi_|sinr_|distance_=32:prelu:bn,32:prelu:bn;ap_airtime_ch=3:prelu"},
           {"mlp.head", "1:relu"},
           {"mlp.loss", "rmse"},
           {"mlp.optimizer", "adam"},
           {"mlp.lr", "0.025"},
           {"mlp.epochs", "700"},
           {"mlp.batch", "64"}});
  } else if (name == "uc3m") {
    apply({{"family", "mlp"},
           {"columns", "x,y,distance,primary#,min#,max#,rssi,sinr,ap_interference"},
           {"mlp.head", "64:relu,64:relu,1:linear"},
           {"mlp.loss", "mse"},
           {"mlp.optimizer", "rmsprop"},
           {"mlp.lr", "0.001"},
           {"mlp.epochs", "50"},
           {"mlp.batch", "50"}});
  } else if (name == "netintels-ann") {
    apply({{"family", "mlp"},
           {"columns", netintels_columns},
           {"mlp.head", "64:relu,64:relu,64:relu,64:relu,64:relu,64:relu,32:relu,1:linear"},
           {"mlp.loss", "mse"},
           {"mlp.optimizer", "adam"},
           {"mlp.lr", "0.001"},
           {"mlp.epochs", "1000"},
           {"mlp.batch", "250"}});
  } else if (name == "netintels-rf") {
    apply({{"family", "forest"}, {"columns", netintels_columns}, {"forest.trees", "100"}, {"forest.depth", "10"}});
  } else if (name == "netintels-knn") {
    apply({{"family", "knn"}, {"columns", netintels_columns}, {"knn.k", "10"}});
  } else if (name == "stc") {
    apply({{"family", "gbm"},
           {"yeo_johnson", "true"},
           {"min_variance", "0.01"},
           {"gbm.rounds", "200"},
           {"gbm.depth", "5"},
           {"gbm.shrinkage", "0.1"}});
  } else if (name == "atari") {
    apply({{"family", "graphnet"}, {"graph.blocks", "2"}, {"graph.hidden", "32"}, {"graph.lr", "0.002"}, {"graph.epochs", "40"}});
  } else {
    std::string list;
    for (const auto &n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown model preset '" + name + "' (valid: " + list + ")");
  }
  s.validate();
  return s;
}

ModelSpec parse_model_arg(const std::string &arg) {
  if (arg.rfind("preset:", 0) == 0) return preset(arg.substr(7));
  ModelSpec s;
  s.family = parse_family(arg);
  return s;
}

// ---- model ------------------------------------------------------------------

struct Model::Learner {
  std::variant<std::monostate, nn::Network, RandomForest, GradientBoosting, Knn, GraphNetModel> v;
};

Model::Model(ModelSpec spec) : spec_(std::move(spec)), learner_(std::make_unique<Learner>()) { spec_.validate(); }
Model::Model(const Model &o)
    : spec_(o.spec_), fitted_(o.fitted_), baseline_(o.baseline_), columns_(o.columns_), pre_(o.pre_),
      target_scale_(o.target_scale_), learner_(std::make_unique<Learner>(*o.learner_)) {}
Model &Model::operator=(const Model &o) {
  if (this != &o) *this = Model(o);
  return *this;
}
Model::Model(Model &&) noexcept = default;
Model &Model::operator=(Model &&) noexcept = default;
Model::~Model() = default;

std::vector<std::size_t> bss_groups(const FeatureTable &t) {
  std::map<std::pair<std::string, std::string>, std::size_t> ids;
  std::vector<std::size_t> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = ids.emplace(std::pair(t.deployment[i], t.bss[i]), ids.size()).first->second;
  return out;
}

namespace {

Matrix to_matrix(const FeatureTable &t) {
  Matrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.width()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.width(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(i, j);
  return m;
}

DataView view(const FeatureTable &t) { return {t.values, t.rows(), t.width()}; }

// Graph predictions aligned to table rows: STA rows match STA nodes by code,
// BSS rows match AP nodes by BSS id.
std::vector<double> graph_predictions(const GraphNetModel &m, const FeatureTable &t, const std::vector<GraphSample> &graphs) {
  std::map<std::string, const GraphSample *> by_id;
  for (const auto &g : graphs) by_id[g.deployment_id] = &g;
  std::map<std::string, std::map<std::string, double>> cache;
  std::vector<double> out(t.rows());
  const bool sta = t.schema.granularity == Granularity::STA;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    auto it = cache.find(t.deployment[i]);
    if (it == cache.end()) {
      auto g = by_id.find(t.deployment[i]);
      if (g == by_id.end()) throw InvalidArgument("no graph for deployment " + t.deployment[i]);
      const auto p = m.predict(*g->second);
      std::map<std::string, double> by_entity;
      for (std::size_t n = 0; n < g->second->nodes.size(); ++n) {
        const auto &node = g->second->nodes[n];
        if ((node.kind == NodeKind::STA) == sta) by_entity[sta ? node.code : node.bss] = p[n];
      }
      it = cache.emplace(t.deployment[i], std::move(by_entity)).first;
    }
    auto e = it->second.find(t.entity[i]);
    if (e == it->second.end()) throw InvalidArgument("deployment " + t.deployment[i] + ": no graph node for " + t.entity[i]);
    out[i] = e->second;
  }
  return out;
}

} // namespace

FeatureTable Model::prepare(const FeatureTable &t) const {
  if (t.schema.granularity != spec_.granularity)
    throw InvalidArgument("model expects " + to_string(spec_.granularity) + " rows, got " + to_string(t.schema.granularity));
  return pre_.transform(t.select_columns(columns_));
}

void Model::fit(const FeatureTable &train, const std::vector<GraphSample> *graphs) {
  if (train.schema.granularity != spec_.granularity)
    throw InvalidArgument("model expects " + to_string(spec_.granularity) + " rows, got " +
                          to_string(train.schema.granularity));
  if (!train.labelled() || train.rows() < 2) throw InvalidArgument("model fit needs at least two labelled rows");
  baseline_ = std::accumulate(train.labels.begin(), train.labels.end(), 0.0) / static_cast<double>(train.rows());

  columns_.clear();
  for (std::size_t j = 0; j < train.width(); ++j) {
    const auto &name = train.schema.columns[j].name;
    const bool wanted = spec_.columns.empty() ||
                        std::any_of(spec_.columns.begin(), spec_.columns.end(),
                                    [&](const std::string &p) { return name.rfind(p, 0) == 0; });
    if (!wanted) continue;
    const auto col = train.column(j);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    double var = 0;
    for (double v : col) var += (v - mean) * (v - mean);
    var /= static_cast<double>(col.size());
    if (var > spec_.min_variance) columns_.push_back(name);
  }
  if (columns_.empty() && spec_.family != Family::GraphNet)
    throw ConfigError("model: no usable columns after selection");
  if (!columns_.empty()) pre_.fit(train.select_columns(columns_), spec_.yeo_johnson);

  learner_->v = std::monostate{};
  target_scale_ = 1;
  switch (spec_.family) {
  case Family::MLP: fit_mlp(prepare(train)); break;
  case Family::RandomForest: {
    const auto x = prepare(train);
    auto fp = spec_.forest;
    fp.seed = spec_.seed;
    RandomForest f(fp);
    f.fit(view(x), train.labels);
    learner_->v = std::move(f);
    break;
  }
  case Family::GBM: {
    const auto x = prepare(train);
    GradientBoosting g(spec_.gbm);
    g.fit(view(x), train.labels);
    learner_->v = std::move(g);
    break;
  }
  case Family::KNN: {
    const auto x = prepare(train);
    Knn k(spec_.knn_k);
    k.fit(view(x), train.labels);
    learner_->v = std::move(k);
    break;
  }
  case Family::GraphNet: {
    if (!graphs) throw InvalidArgument("graphnet models need graphs");
    std::set<std::string> ids(train.deployment.begin(), train.deployment.end());
    std::vector<GraphSample> mine;
    for (const auto &g : *graphs)
      if (ids.count(g.deployment_id)) mine.push_back(g);
    auto gp = spec_.graph;
    gp.seed = spec_.seed;
    GraphNetModel g(gp);
    g.fit(mine);
    learner_->v = std::move(g);
    break;
  }
  }
  fitted_ = true;
}

void train_mlp(nn::Network &net, const Matrix &x, const Eigen::VectorXd &y, const std::vector<std::size_t> *groups,
               const MlpSpec &ms, Rng &rng) {
  const auto rows = static_cast<std::size_t>(x.rows());
  if (rows == 0 || static_cast<std::size_t>(y.size()) != rows) throw InvalidArgument("mlp training: rows and labels differ");
  const bool masked = ms.loss == nn::Loss::MaskedRMSE;
  if (masked && (!groups || groups->size() != rows)) throw InvalidArgument("masked loss needs a BSS group for every row");
  std::vector<std::vector<std::size_t>> units;
  if (masked) {
    units.resize(*std::max_element(groups->begin(), groups->end()) + 1);
    for (std::size_t i = 0; i < rows; ++i) units[(*groups)[i]].push_back(i);
    std::erase_if(units, [](const auto &u) { return u.empty(); });
  } else {
    for (std::size_t i = 0; i < rows; ++i) units.push_back({i});
  }

  nn::Optimizer opt(ms.optimizer, ms.learning_rate);
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> batch_groups;
  for (std::size_t epoch = 0; epoch < ms.epochs; ++epoch) {
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (auto u : order) {
      if (batches.empty() || batches.back().size() >= ms.batch_size) batches.emplace_back();
      batches.back().insert(batches.back().end(), units[u].begin(), units[u].end());
    }
    // A single trailing row would give batch normalization a zero variance.
    if (batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back()[0]);
      batches.pop_back();
    }
    for (const auto &b : batches) {
      Matrix xb(static_cast<Eigen::Index>(b.size()), x.cols());
      Eigen::VectorXd yb(static_cast<Eigen::Index>(b.size()));
      batch_groups.clear();
      for (std::size_t k = 0; k < b.size(); ++k) {
        xb.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(b[k]));
        yb(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(b[k]));
        if (masked) batch_groups.push_back((*groups)[b[k]]);
      }
      const Matrix pred = net.forward(xb, true);
      Matrix grad;
      const double loss = nn::loss_and_grad(ms.loss, pred, yb, masked ? &batch_groups : nullptr, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingError("mlp training diverged at epoch " + std::to_string(epoch + 1) + " (non-finite loss)");
      net.zero_grad();
      net.backward(grad);
      opt.step(net.params());
    }
  }
}

void Model::fit_mlp(const FeatureTable &x) {
  const auto &ms = spec_.mlp;
  if (ms.normalize_target && baseline_ > 0) target_scale_ = baseline_;
  Rng rng(spec_.seed);
  nn::Network net(columns_, ms.branches, ms.head, rng);
  // Start the output at the mean target so a ReLU output begins active.
  auto &head = net.head();
  for (std::size_t i = head.size(); i-- > 0;)
    if (auto *d = dynamic_cast<nn::Dense *>(&head.layer(i))) {
      d->bias().value.setConstant(baseline_ / target_scale_);
      break;
    }

  const Matrix X = to_matrix(x);
  Eigen::VectorXd y(static_cast<Eigen::Index>(x.rows()));
  for (std::size_t i = 0; i < x.rows(); ++i) y(static_cast<Eigen::Index>(i)) = x.labels[i] / target_scale_;
  const auto groups = bss_groups(x);
  train_mlp(net, X, y, ms.loss == nn::Loss::MaskedRMSE ? &groups : nullptr, ms, rng);
  learner_->v = std::move(net);
}

std::vector<double> Model::predict(const FeatureTable &t, const std::vector<GraphSample> *graphs) const {
  if (!fitted_) throw InvalidArgument("model used before fit");
  if (t.schema.granularity != spec_.granularity)
    throw InvalidArgument("model expects " + to_string(spec_.granularity) + " rows, got " + to_string(t.schema.granularity));
  if (t.rows() == 0) return {};
  std::vector<double> out(t.rows());
  if (auto *g = std::get_if<GraphNetModel>(&learner_->v)) {
    if (!graphs) throw InvalidArgument("graphnet models need graphs");
    return graph_predictions(*g, t, *graphs);
  }
  const auto x = prepare(t);
  if (auto *n = std::get_if<nn::Network>(&learner_->v)) {
    nn::Network net = *n;
    const Matrix p = net.forward(to_matrix(x), false);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p(static_cast<Eigen::Index>(i), 0) * target_scale_;
  } else {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::visit(
          [&](const auto &m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, RandomForest> || std::is_same_v<T, GradientBoosting> || std::is_same_v<T, Knn>)
              return m.predict(x.row(i));
            else
              throw InvalidArgument("model has no learner");
          },
          learner_->v);
  }
  return out;
}

// ---- serialization ----------------------------------------------------------

std::string Model::serialize() const {
  if (!fitted_) throw InvalidArgument("model used before fit");
  std::string out = std::string(kModelMagic) + "\n";
  const auto kv = spec_.to_kv();
  out += "spec " + std::to_string(kv.size()) + "\n";
  for (const auto &[k, v] : kv) out += k + " " + (v.empty() ? "-" : v) + "\n";
  out += "baseline " + csv::format(baseline_) + "\n";
  out += "target_scale " + csv::format(target_scale_) + "\n";
  out += "columns " + std::to_string(columns_.size());
  for (const auto &c : columns_) out += " " + c;
  out += "\n";
  const std::string pre = columns_.empty() ? std::string() : pre_.serialize();
  const auto pre_lines = static_cast<std::size_t>(std::count(pre.begin(), pre.end(), '\n'));
  out += "preprocessor " + std::to_string(pre_lines) + "\n" + pre;
  TextWriter w;
  std::visit(
      [&](const auto &m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, std::monostate>) throw InvalidArgument("model has no learner");
        else m.write(w);
      },
      learner_->v);
  return out + w.str();
}

Model Model::deserialize(std::string_view text, const std::string &source) {
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::string & {
    if (!std::getline(is, line)) throw ParseError(source + ": unexpected end of model file");
    ++lineno;
    return line;
  };
  auto fail = [&](const std::string &what) -> void {
    throw ParseError(source + ": line " + std::to_string(lineno) + ": " + what);
  };
  auto header = [&](const std::string &tag) -> std::string {
    next();
    if (line.rfind(tag + " ", 0) != 0) fail("expected '" + tag + "'");
    return line.substr(tag.size() + 1);
  };
  if (next() != kModelMagic) fail("not a model file (expected '" + std::string(kModelMagic) + "')");
  ModelSpec spec;
  const auto n = std::stoul(header("spec"));
  for (std::size_t i = 0; i < n; ++i) {
    next();
    const auto sp = line.find(' ');
    if (sp == std::string::npos) fail("expected 'key value'");
    const std::string v = line.substr(sp + 1);
    try {
      spec.set(line.substr(0, sp), v == "-" ? "" : v);
    } catch (const ConfigError &e) {
      fail(e.what());
    }
  }
  Model m(spec);
  m.baseline_ = std::stod(header("baseline"));
  m.target_scale_ = std::stod(header("target_scale"));
  {
    std::istringstream cs(header("columns"));
    std::size_t k = 0;
    cs >> k;
    std::string c;
    while (cs >> c) m.columns_.push_back(c);
    if (m.columns_.size() != k) fail("column count mismatch");
  }
  const auto pre_lines = std::stoul(header("preprocessor"));
  std::string pre;
  for (std::size_t i = 0; i < pre_lines; ++i) pre += next() + "\n";
  if (!pre.empty()) m.pre_ = Preprocessor::deserialize(pre);
  std::string rest((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  TextReader r(rest, source);
  switch (spec.family) {
  case Family::MLP: m.learner_->v = nn::Network::read(r); break;
  case Family::RandomForest: m.learner_->v = RandomForest::read(r); break;
  case Family::GBM: m.learner_->v = GradientBoosting::read(r); break;
  case Family::KNN: m.learner_->v = Knn::read(r); break;
  case Family::GraphNet: m.learner_->v = GraphNetModel::read(r); break;
  }
  if (!r.done()) r.fail("trailing data after the model");
  m.fitted_ = true;
  return m;
}

// ---- grid search --------------------------------------------------------------

GridReport grid_search(const std::vector<ModelSpec> &grid, const FeatureTable &train, const FeatureTable &validation,
                       const std::vector<GraphSample> *graphs, int jobs) {
  if (grid.empty()) throw InvalidArgument("grid search over an empty grid");
  if (!validation.labelled() || validation.rows() == 0) throw InvalidArgument("grid search needs labelled validation rows");
  GridReport rep;
  rep.cells.resize(grid.size());
  const auto errors = parallel_for(grid.size(), jobs, [&](std::size_t i) {
    auto &cell = rep.cells[i];
    cell.index = i;
    cell.spec = grid[i];
    Model m(grid[i]);
    m.fit(train, graphs);
    const auto p = m.predict(validation, graphs);
    double s = 0;
    for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - validation.labels[k]) * (p[k] - validation.labels[k]);
    const double rmse = std::sqrt(s / static_cast<double>(p.size()));
    if (!std::isfinite(rmse)) throw TrainingError("non-finite validation RMSE");
    cell.rmse = rmse;
  });
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto &cell = rep.cells[i];
    cell.index = i;
    cell.spec = grid[i];
    if (!errors[i].empty()) {
      cell.rmse.reset();
      cell.error = errors[i];
      continue;
    }
    if (!best || *cell.rmse < *rep.cells[*best].rmse) best = i;
  }
  if (!best) throw TrainingError("grid search: every cell failed (first: " + errors[0] + ")");
  rep.best = *best;
  return rep;
}

std::string to_csv(const GridReport &r) {
  // Only keys that vary across cells; list separators become spaces.
  std::vector<std::vector<std::pair<std::string, std::string>>> kvs;
  for (const auto &c : r.cells) kvs.push_back(c.spec.to_kv());
  std::vector<std::size_t> varying;
  for (std::size_t k = 0; !kvs.empty() && k < kvs[0].size(); ++k)
    for (const auto &kv : kvs)
      if (kv[k].second != kvs[0][k].second) {
        varying.push_back(k);
        break;
      }
  auto clean = [](std::string s) {
    std::replace(s.begin(), s.end(), ',', ' ');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
  };
  std::vector<std::string> header = {"index"};
  for (auto k : varying) header.push_back(kvs[0][k].first);
  header.insert(header.end(), {"rmse", "best", "error"});
  std::string out = csv::join(header) + "\n";
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    const auto &c = r.cells[i];
    std::vector<std::string> f = {std::to_string(c.index)};
    for (auto k : varying) f.push_back(clean(kvs[i][k].second));
    f.push_back(c.rmse ? csv::format(*c.rmse) : "");
    f.push_back(i == r.best ? "1" : "0");
    f.push_back(clean(c.error));
    out += csv::join(f) + "\n";
  }
  return out;
}

} // namespace cbnet
