#include "cbnet/deployment.hpp"
#include "cbnet/error.hpp"
#include "cbnet/macsim.hpp"
#include "cbnet/predictors.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <set>

using namespace cbnet;

namespace {

// y = 3 a - 2 b + 10 + noise, grouped into BSSs of four rows.
FeatureTable linear_table(std::size_t n, std::uint64_t seed, double noise = 0.1) {
  FeatureTable t;
  t.schema = FeatureSchema::from_names(Granularity::STA, {"a", "b", "c"});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2), c = rng.uniform(0, 1);
    const std::vector<double> x = {a, b, c};
    t.add_row("d" + std::to_string(i / 8), "B" + std::to_string(i / 4 % 2), "S" + std::to_string(i), x,
              3 * a - 2 * b + 10 + rng.normal(0, noise));
  }
  return t;
}

struct Simulated {
  FeatureTable sta, bss;
  std::vector<GraphSample> graphs;
};

Simulated simulated(const std::string &spec, int count, std::uint64_t seed) {
  SimConfig cfg;
  cfg.duration_s = 0.3;
  ExtractOptions opt;
  opt.impute_missing = true;
  Simulated s;
  std::vector<FeatureTable> parts;
  for (int i = 0; i < count; ++i) {
    const auto d = generate(desk_scale(find_spec(spec)), i, seed);
    const auto r = simulate(d, cfg);
    parts.push_back(extract_sta(d, r, opt));
    s.graphs.push_back(build_graph(d, r, opt));
  }
  s.sta = FeatureTable::concat(parts);
  s.bss = aggregate_bss(s.sta);
  return s;
}

ModelSpec small(ModelSpec s) {
  s.mlp.epochs = std::min<std::size_t>(s.mlp.epochs, 5);
  s.forest.trees = std::min<std::size_t>(s.forest.trees, 5);
  s.gbm.rounds = std::min<std::size_t>(s.gbm.rounds, 10);
  s.graph.epochs = std::min<std::size_t>(s.graph.epochs, 3);
  return s;
}

} // namespace

TEST_CASE("single linear layer recovers the least-squares line") {
  Rng data(5);
  const Eigen::Index n = 200;
  nn::Matrix x(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = data.uniform(-1, 1);
    y(i) = 2 * x(i, 0) + 1;
  }
  // Closed-form least squares on [x, 1].
  nn::Matrix a(n, 2);
  a << x, Eigen::VectorXd::Ones(n);
  const Eigen::Vector2d ls = a.colPivHouseholderQr().solve(y);

  Rng rng(1);
  nn::Network net({"x"}, {}, {{1, nn::Activation::Linear, false}}, rng);
  MlpSpec ms;
  ms.learning_rate = 0.05;
  ms.epochs = 2000;
  ms.batch_size = 200;
  train_mlp(net, x, y, nullptr, ms, rng);
  auto &dense = dynamic_cast<nn::Dense &>(net.head().layer(0));
  CHECK(std::abs(dense.weight().value(0, 0) - ls(0)) < 1e-2);
  CHECK(std::abs(dense.bias().value(0, 0) - ls(1)) < 1e-2);
  CHECK(std::abs(ls(0) - 2) < 1e-2);
  CHECK(std::abs(ls(1) - 1) < 1e-2);
}

TEST_CASE("non-finite loss is a training error naming the epoch") {
  Rng rng(1);
  nn::Network net({"x"}, {}, {{4, nn::Activation::Relu, false}, {1, nn::Activation::Linear, false}}, rng);
  nn::Matrix x(4, 1);
  x << 1, 2, std::nan(""), 4;
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  MlpSpec ms;
  ms.batch_size = 4;
  try {
    train_mlp(net, x, y, nullptr, ms, rng);
    FAIL("expected a training error");
  } catch (const TrainingError &e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("relu output never predicts negative throughput") {
  ModelSpec s;
  s.family = Family::MLP;
  s.mlp.head = parse_layers("16:prelu,1:relu");
  s.mlp.epochs = 20;
  Model m(s);
  m.fit(linear_table(200, 3));
  FeatureTable q = linear_table(300, 4);
  for (auto &v : q.values) v *= -50; // far outside the training range
  for (double p : m.predict(q)) {
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
  }
}

TEST_CASE("presets") {
  for (const auto &name : preset_names()) {
    CAPTURE(name);
    const auto s = preset(name);
    // Every key survives a text round trip.
    ModelSpec back;
    for (const auto &[k, v] : s.to_kv()) back.set(k, v);
    CHECK(back == s);
    CHECK(parse_model_arg("preset:" + name) == s);
  }
  const auto ramon = preset("ramon");
  CHECK(ramon.family == Family::MLP);
  CHECK(ramon.granularity == Granularity::BSS);
  CHECK(ramon.mlp.learning_rate == 0.025);
  CHECK(ramon.mlp.epochs == 700);
  CHECK(ramon.mlp.optimizer == nn::OptimizerKind::Adam);
  REQUIRE(ramon.mlp.branches.size() == 2);
  CHECK(ramon.mlp.branches[0].layers.size() == 2);
  CHECK(ramon.mlp.branches[0].layers[0].activation == nn::Activation::Prelu);
  CHECK(ramon.mlp.branches[0].layers[0].batch_norm);
  CHECK(ramon.mlp.branches[1].layers == std::vector<nn::LayerSpec>{{3, nn::Activation::Prelu, false}});
  CHECK(ramon.mlp.head == std::vector<nn::LayerSpec>{{1, nn::Activation::Relu, false}});

  const auto uc3m = preset("uc3m");
  CHECK(uc3m.mlp.optimizer == nn::OptimizerKind::RMSProp);
  CHECK(uc3m.mlp.loss == nn::Loss::MSE);
  CHECK(uc3m.mlp.epochs == 50);
  CHECK(uc3m.mlp.batch_size == 50);
  CHECK(uc3m.mlp.head.size() == 3);
  CHECK(uc3m.mlp.head.back().activation == nn::Activation::Linear);

  const auto ann = preset("netintels-ann");
  CHECK(ann.mlp.head.size() == 8);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ann.mlp.head[i].width == 64);
  CHECK(ann.mlp.head[6].width == 32);
  CHECK(ann.mlp.batch_size == 250);
  CHECK(ann.mlp.epochs == 1000);

  CHECK(preset("netintels-rf").forest.trees == 100);
  CHECK(preset("netintels-rf").forest.max_depth == 10);
  CHECK(preset("netintels-knn").knn_k == 10);
  CHECK(preset("stc").yeo_johnson);
  CHECK(preset("atari").family == Family::GraphNet);

  try {
    preset("nope");
    FAIL("expected a config error");
  } catch (const ConfigError &e) {
    CHECK(std::string(e.what()).find("netintels-knn") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_model_arg("svm"), ConfigError);
}

TEST_CASE("spec validation") {
  ModelSpec s;
  s.family = Family::MLP;
  s.mlp.head = parse_layers("1:relu");
  CHECK_THROWS_AS(Model{s}, ConfigError); // no hidden layer
  s.mlp.head = parse_layers("4:relu,1:linear");
  s.mlp.learning_rate = 0;
  CHECK_THROWS_AS(Model{s}, ConfigError);
  CHECK_THROWS_AS(parse_layers("4:tanh"), ConfigError);
  CHECK_THROWS_AS(parse_layers("0:relu"), ConfigError);
  CHECK_THROWS_AS(s.set("mlp.lr", "fast"), ConfigError);
  CHECK_THROWS_AS(s.set("mlp.width", "3"), ConfigError);
  ModelSpec g;
  g.family = Family::GBM;
  g.gbm.shrinkage = 2;
  CHECK_THROWS_AS(Model{g}, ConfigError);
}

TEST_CASE("every family fits deterministically and reloads bit-exactly") {
  const auto sim = simulated("training2c", 6, 11);
  std::vector<ModelSpec> specs;
  for (const auto &name : preset_names()) specs.push_back(small(preset(name)));
  ModelSpec masked;
  masked.family = Family::MLP;
  masked.mlp.loss = nn::Loss::MaskedRMSE;
  masked.mlp.epochs = 5;
  specs.push_back(masked);
  for (const auto &s : specs) {
    CAPTURE(to_string(s.family));
    const auto &table = s.granularity == Granularity::STA ? sim.sta : sim.bss;
    Model a(s), b(s);
    CHECK_THROWS_AS(a.predict(table, &sim.graphs), InvalidArgument);
    a.fit(table, &sim.graphs);
    b.fit(table, &sim.graphs);
    const auto text = a.serialize();
    CHECK(text == b.serialize());
    const Model back = Model::deserialize(text);
    CHECK(back.serialize() == text);
    const auto p = a.predict(table, &sim.graphs);
    CHECK(back.predict(table, &sim.graphs) == p);
    CHECK(p.size() == table.rows());
    for (double v : p) CHECK(std::isfinite(v));
    CHECK(a.baseline() == doctest::Approx(std::accumulate(table.labels.begin(), table.labels.end(), 0.0) /
                                          static_cast<double>(table.rows())));
    const Model copy = a;
    CHECK(copy.predict(table, &sim.graphs) == p);
  }
}

TEST_CASE("graph predictions line up with STA and BSS rows") {
  const auto sim = simulated("training1c", 5, 2);
  ModelSpec s = small(preset("atari"));
  Model sta(s);
  sta.fit(sim.sta, &sim.graphs);
  s.granularity = Granularity::BSS;
  Model bss(s);
  bss.fit(sim.bss, &sim.graphs);
  // Same seed and graphs: the BSS model's AP outputs are sums of the STA outputs.
  const auto ps = sta.predict(sim.sta, &sim.graphs);
  const auto pb = bss.predict(sim.bss, &sim.graphs);
  std::map<std::pair<std::string, std::string>, double> sums;
  for (std::size_t i = 0; i < sim.sta.rows(); ++i) sums[{sim.sta.deployment[i], sim.sta.bss[i]}] += ps[i];
  for (std::size_t i = 0; i < sim.bss.rows(); ++i)
    CHECK(pb[i] == doctest::Approx(sums.at({sim.bss.deployment[i], sim.bss.entity[i]})).epsilon(1e-12));
  CHECK_THROWS_AS(sta.predict(sim.sta), InvalidArgument);
  CHECK_THROWS_AS(Model(s).fit(sim.bss), InvalidArgument);
}

TEST_CASE("granularity and column checks") {
  const auto t = linear_table(40, 1);
  ModelSpec s;
  s.granularity = Granularity::BSS;
  CHECK_THROWS_AS(Model(s).fit(t), InvalidArgument);
  ModelSpec c;
  c.columns = {"zzz"};
  CHECK_THROWS_AS(Model(c).fit(t), ConfigError);
  ModelSpec keep;
  keep.columns = {"a", "b"};
  keep.forest.trees = 3;
  Model m(keep);
  m.fit(t);
  CHECK(m.columns() == std::vector<std::string>{"a", "b"});
  ModelSpec var;
  var.min_variance = 0.2; // c ~ U(0, 1) has variance 1/12
  var.forest.trees = 3;
  Model mv(var);
  mv.fit(t);
  CHECK(mv.columns() == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(Model::deserialize("cbnet-model v0\n"), ParseError);
  CHECK_THROWS_AS(Model::deserialize(m.serialize() + "junk\n"), ParseError);
}

TEST_CASE("grid search") {
  const auto train = linear_table(240, 7, 0.05), val = linear_table(80, 8, 0.05);
  ModelSpec linear_mlp;
  linear_mlp.family = Family::MLP;
  linear_mlp.mlp.head = parse_layers("4:linear,1:linear");
  linear_mlp.mlp.epochs = 150;
  linear_mlp.mlp.learning_rate = 0.01;
  ModelSpec stump;
  stump.forest.max_depth = 1;
  stump.forest.trees = 10;
  ModelSpec wide_knn;
  wide_knn.family = Family::KNN;
  wide_knn.knn_k = 100;
  ModelSpec broken;
  broken.family = Family::KNN;
  broken.knn_k = 1000; // more neighbours than rows

  const auto one = grid_search({stump}, train, val);
  CHECK(one.best == 0);
  CHECK(one.cells.size() == 1);

  const std::vector<ModelSpec> grid = {stump, broken, linear_mlp, wide_knn};
  const auto rep = grid_search(grid, train, val);
  CHECK(rep.best == 2);
  CHECK_FALSE(rep.cells[1].rmse.has_value());
  CHECK(rep.cells[1].error.find("exceeds") != std::string::npos);
  CHECK(*rep.cells[2].rmse < 0.2);
  const auto again = grid_search(grid, train, val, nullptr, 3);
  CHECK(to_csv(again) == to_csv(rep));

  // Equal scores: the earlier cell wins.
  const auto tie = grid_search({wide_knn, wide_knn}, train, val);
  CHECK(tie.best == 0);
  CHECK_THROWS_AS(grid_search({}, train, val), InvalidArgument);
  CHECK_THROWS_AS(grid_search({broken}, train, val), TrainingError);
}
