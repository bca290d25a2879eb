#include "cbnet/pipeline.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/deployment.hpp"
#include "cbnet/error.hpp"
#include "cbnet/eval.hpp"
#include "cbnet/features.hpp"
#include "cbnet/macsim.hpp"
#include "cbnet/parallel.hpp"
#include "cbnet/predictors.hpp"
#include "cbnet/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace fs = std::filesystem;

namespace cbnet {

namespace {

const std::vector<std::string> kKeys = {
    "run.jobs",
    "generate.specs", "generate.count", "generate.desk_scale", "generate.seed", "generate.out",
    "scenario.name", "scenario.map_width", "scenario.map_height", "scenario.ap_count", "scenario.sta_min",
    "scenario.sta_max", "scenario.deployment_count",
    "placement.sta_radius", "placement.tx_power", "placement.cca", "placement.ap_jitter",
    "simulate.in", "simulate.out", "simulate.policy", "simulate.seed", "simulate.duration", "simulate.slot_us",
    "simulate.difs_us", "simulate.cw_slots", "simulate.txop_ms",
    "rf.pl0_db", "rf.gamma", "rf.noise_floor_dbm", "rf.mcs", "rf.shadowing_sigma_db", "rf.shadowing_seed",
    "dataset.deployments", "dataset.results", "dataset.out", "dataset.impute", "dataset.variance_threshold",
    "train.data", "train.out", "train.model", "train.scenarios", "train.validation", "train.split_seed",
    "predict.model", "predict.data", "predict.out", "predict.scenarios",
    "evaluate.predictions", "evaluate.out", "evaluate.bin_width", "evaluate.histogram_max", "evaluate.threshold",
    "evaluate.assert_mae_ratio",
};

// Locations, not settings: left out of manifests so reruns elsewhere hash the same.
const std::set<std::string> kPathKeys = {
    "generate.out", "simulate.in", "simulate.out", "dataset.deployments", "dataset.results", "dataset.out",
    "train.data", "train.out", "predict.model", "predict.data", "predict.out", "evaluate.predictions",
    "evaluate.out", "run.jobs",
};

const std::set<std::string> &model_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> s;
    for (const auto &[k, v] : ModelSpec{}.to_kv()) s.insert(k);
    return s;
  }();
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(sep, start), s.size());
    auto item = trim(std::string_view(s).substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = end + 1;
  }
  return out;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Typed, validated access to one config.
class Reader {
public:
  explicit Reader(const RunConfig &c) : c_(c) {}

  std::string str(const std::string &key, const std::string &fallback = "") const {
    return c_.get(key).value_or(fallback);
  }
  fs::path path(const std::string &key) const {
    const auto v = c_.get(key);
    if (!v || v->empty()) throw ConfigError(key + " is required");
    return *v;
  }
  double num(const std::string &key, double fallback) const {
    const auto v = c_.get(key);
    if (!v) return fallback;
    double out = 0;
    const auto r = std::from_chars(v->data(), v->data() + v->size(), out);
    if (v->empty() || r.ec != std::errc{} || r.ptr != v->data() + v->size() || !std::isfinite(out))
      throw ConfigError(key + ": '" + *v + "' is not a number");
    return out;
  }
  std::uint64_t uint(const std::string &key, std::uint64_t fallback) const {
    const auto v = c_.get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto r = std::from_chars(v->data(), v->data() + v->size(), out);
    if (v->empty() || r.ec != std::errc{} || r.ptr != v->data() + v->size())
      throw ConfigError(key + ": '" + *v + "' is not a non-negative integer");
    return out;
  }
  int integer(const std::string &key, int fallback) const {
    const auto v = uint(key, static_cast<std::uint64_t>(fallback));
    if (v > 1'000'000'000) throw ConfigError(key + " is out of range");
    return static_cast<int>(v);
  }
  bool flag(const std::string &key, bool fallback) const {
    const auto v = c_.get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError(key + ": '" + *v + "' is not true or false");
  }
  int jobs() const {
    const int j = integer("run.jobs", 1);
    if (j < 1) throw ConfigError("run.jobs must be >= 1");
    return j;
  }

private:
  const RunConfig &c_;
};

RfConfig rf_config(const Reader &r) {
  RfConfig rf;
  rf.pl0_db = r.num("rf.pl0_db", rf.pl0_db);
  rf.gamma = r.num("rf.gamma", rf.gamma);
  rf.noise_floor_dbm = r.num("rf.noise_floor_dbm", rf.noise_floor_dbm);
  rf.mcs_table = mcs_preset(r.str("rf.mcs", "desk"));
  rf.shadowing_sigma_db = r.num("rf.shadowing_sigma_db", rf.shadowing_sigma_db);
  rf.shadowing_seed = r.uint("rf.shadowing_seed", rf.shadowing_seed);
  rf.validate();
  return rf;
}

// Natural order: scenario directories by name, files by numeric index.
bool natural_less(const fs::path &a, const fs::path &b) {
  if (a.parent_path() != b.parent_path()) return a.parent_path() < b.parent_path();
  const auto sa = a.stem().string(), sb = b.stem().string();
  const bool na = !sa.empty() && std::all_of(sa.begin(), sa.end(), ::isdigit);
  const bool nb = !sb.empty() && std::all_of(sb.begin(), sb.end(), ::isdigit);
  if (na && nb && sa.size() != sb.size()) return sa.size() < sb.size();
  return sa < sb;
}

/// CSV files under `root`, relative to it, manifests excluded.
std::vector<fs::path> csv_files(const fs::path &root) {
  if (!fs::is_directory(root)) throw ConfigError(root.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end(), natural_less);
  return out;
}

void check_not_input(const fs::path &out, const std::vector<fs::path> &inputs) {
  for (const auto &in : inputs)
    if (fs::weakly_canonical(out) == fs::weakly_canonical(in))
      throw ConfigError("output directory " + out.string() + " is also an input");
}

struct Manifest {
  std::string command;
  const RunConfig *cfg = nullptr;
  std::vector<std::string> sections;
  std::vector<std::pair<std::string, std::string>> seeds;
  std::vector<std::pair<fs::path, std::vector<fs::path>>> inputs; // root, files relative to it
  std::vector<fs::path> outputs;                                  // relative to the output dir

  void write(const fs::path &dir) const {
    std::string config;
    for (const auto &[k, v] : cfg->values()) {
      if (kPathKeys.count(k)) continue;
      const auto section = k.substr(0, k.find('.'));
      if (std::find(sections.begin(), sections.end(), section) != sections.end()) config += k + " = " + v + "\n";
    }
    std::string text = std::string("# ") + kManifestMagic + "\n";
    text += "command " + command + "\n";
    text += std::string("version ") + kToolVersion + "\n";
    text += "config_hash " + hex(fnv1a(config)) + "\n";
    for (const auto &[name, value] : seeds) text += "seed " + name + " " + value + "\n";
    text += "[config]\n" + config;
    text += "[inputs]\n";
    for (const auto &[root, files] : inputs)
      for (const auto &f : files)
        text += f.generic_string() + " " + hex(fnv1a(csv::read_file(root / f))) + "\n";
    text += "[outputs]\n";
    auto sorted = outputs;
    std::sort(sorted.begin(), sorted.end(), natural_less);
    for (const auto &f : sorted) text += f.generic_string() + " " + hex(fnv1a(csv::read_file(dir / f))) + "\n";
    csv::write_file(dir / "manifest.txt", text);
  }
};

void collect(CommandResult &res, const std::vector<std::string> &errors, const std::vector<std::string> &labels) {
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) res.errors.push_back(labels[i] + ": " + errors[i]);
  if (!res.errors.empty()) res.exit_code = 1;
}

std::string scenario_of(const std::string &deployment_id) { return deployment_id.substr(0, deployment_id.find('/')); }

FeatureTable filter_scenarios(const FeatureTable &t, const std::string &list, const std::string &key) {
  if (list.empty()) return t;
  const auto names = split_list(list, ',');
  std::vector<std::string> ids;
  for (const auto &d : t.deployment)
    if (std::find(names.begin(), names.end(), scenario_of(d)) != names.end() &&
        (ids.empty() || ids.back() != d) && std::find(ids.begin(), ids.end(), d) == ids.end())
      ids.push_back(d);
  if (ids.empty()) throw ConfigError(key + ": no rows belong to scenarios '" + list + "'");
  return t.filter_deployments(ids);
}

fs::path table_file(Granularity g) { return g == Granularity::STA ? "sta.csv" : "bss.csv"; }

std::vector<GraphSample> load_graphs(const fs::path &data) {
  return graphs_from_csv(csv::read_file(data / "graph_nodes.csv"), csv::read_file(data / "graph_edges.csv"),
                         data.string());
}

// Cartesian product of grid.* alternatives over `base`; the last key varies fastest.
std::vector<ModelSpec> expand_grid(const ModelSpec &base, const RunConfig &cfg) {
  std::vector<ModelSpec> cells = {base};
  for (const auto &[k, v] : cfg.values()) {
    if (k.rfind("grid.", 0) != 0) continue;
    const auto alternatives = split_list(v, '|');
    if (alternatives.empty()) throw ConfigError(k + " lists no values");
    std::vector<ModelSpec> next;
    for (const auto &c : cells)
      for (const auto &a : alternatives) {
        ModelSpec s = c;
        s.set(k.substr(5), a);
        s.validate();
        next.push_back(s);
      }
    cells = std::move(next);
  }
  return cells;
}

} // namespace

// ---- config ---------------------------------------------------------------

void check_config_key(const std::string &key) {
  if (std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end()) return;
  for (const char *prefix : {"model.", "grid."})
    if (key.rfind(prefix, 0) == 0 && model_keys().count(key.substr(std::string(prefix).size()))) return;
  throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig RunConfig::parse(std::string_view text, const std::string &source) {
  RunConfig c;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'section.key = value'");
    const auto key = trim(std::string_view(line).substr(0, eq));
    if (c.has(key)) throw ConfigError(where + "'" + key + "' given twice");
    try {
      c.set(key, trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError &e) {
      throw ConfigError(where + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const fs::path &path) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file " + path.string() + " not found");
  return parse(csv::read_file(path), path.string());
}

void RunConfig::set(const std::string &key, const std::string &value) {
  check_config_key(key);
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

std::optional<std::string> RunConfig::get(const std::string &key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

// ---- generate -------------------------------------------------------------

CommandResult cmd_generate(const RunConfig &cfg) {
  const Reader r(cfg);
  const auto out = r.path("generate.out");
  const auto seed = r.uint("generate.seed", 1);
  const auto count = r.integer("generate.count", 0);
  const bool desk = r.flag("generate.desk_scale", false);
  const int jobs = r.jobs();

  std::vector<ScenarioSpec> specs;
  for (const auto &name : split_list(r.str("generate.specs"), ',')) {
    if (name == "training" || name == "test" || name == "all") {
      for (const auto &s : builtin_specs())
        if (name == "all" || s.name.rfind(name, 0) == 0) specs.push_back(s);
    } else {
      specs.push_back(find_spec(name));
    }
  }
  if (cfg.has("scenario.name")) {
    ScenarioSpec s;
    s.name = r.str("scenario.name");
    s.map_width = r.num("scenario.map_width", 0);
    s.map_height = r.num("scenario.map_height", 0);
    s.ap_count = r.integer("scenario.ap_count", 1);
    s.sta_min = r.integer("scenario.sta_min", 1);
    s.sta_max = r.integer("scenario.sta_max", 1);
    s.deployment_count = r.integer("scenario.deployment_count", 1);
    specs.push_back(s);
  }
  if (specs.empty()) throw ConfigError("generate needs generate.specs or scenario.name");
  for (auto &s : specs) {
    if (desk) s = desk_scale(s);
    if (count > 0) s.deployment_count = count;
    s.placement.sta_radius_m = r.num("placement.sta_radius", s.placement.sta_radius_m);
    s.placement.tx_power_dbm = r.num("placement.tx_power", s.placement.tx_power_dbm);
    s.placement.cca_dbm = r.num("placement.cca", s.placement.cca_dbm);
    s.placement.ap_jitter = r.num("placement.ap_jitter", s.placement.ap_jitter);
    s.validate();
  }

  std::vector<std::pair<const ScenarioSpec *, int>> work;
  std::vector<std::string> labels;
  std::vector<fs::path> files;
  for (const auto &s : specs)
    for (int i = 0; i < s.deployment_count; ++i) {
      work.emplace_back(&s, i);
      labels.push_back(s.name + "/" + std::to_string(i));
      files.push_back(fs::path(s.name) / (std::to_string(i) + ".csv"));
    }
  const auto errors = parallel_for(work.size(), jobs, [&](std::size_t k) {
    write_csv(generate(*work[k].first, work[k].second, seed), out / files[k]);
  });
  CommandResult res;
  collect(res, errors, labels);
  Manifest m{"generate", &cfg, {"generate", "scenario", "placement"}, {{"generate", std::to_string(seed)}}, {}, {}};
  for (std::size_t k = 0; k < files.size(); ++k)
    if (errors[k].empty()) m.outputs.push_back(files[k]);
  m.write(out);
  res.output = "generated " + std::to_string(m.outputs.size()) + " deployments in " + out.string() + "\n";
  return res;
}

// ---- simulate -------------------------------------------------------------

CommandResult cmd_simulate(const RunConfig &cfg) {
  const Reader r(cfg);
  const auto in = r.path("simulate.in"), out = r.path("simulate.out");
  SimConfig sc;
  sc.policy = parse_policy(r.str("simulate.policy", "AM"));
  sc.seed = r.uint("simulate.seed", sc.seed);
  sc.duration_s = r.num("simulate.duration", sc.duration_s);
  sc.slot_us = r.num("simulate.slot_us", sc.slot_us);
  sc.difs_us = r.num("simulate.difs_us", sc.difs_us);
  sc.cw_slots = r.integer("simulate.cw_slots", sc.cw_slots);
  sc.txop_ms = r.num("simulate.txop_ms", sc.txop_ms);
  sc.rf = rf_config(r);
  sc.validate();
  const int jobs = r.jobs();
  check_not_input(out, {in});
  const auto files = csv_files(in);
  if (files.empty()) throw ConfigError("no deployment files under " + in.string());

  std::vector<std::string> labels;
  for (const auto &f : files) labels.push_back(f.generic_string());
  const auto errors = parallel_for(files.size(), jobs, [&](std::size_t k) {
    const auto d = read_deployment_csv(in / files[k]);
    check_policy_compatibility(d, sc.policy);
    write_results_csv(simulate(d, sc), out / files[k]);
  });
  CommandResult res;
  collect(res, errors, labels);
  Manifest m{"simulate", &cfg, {"simulate", "rf"}, {{"simulate", std::to_string(sc.seed)}}, {{in, files}}, {}};
  for (std::size_t k = 0; k < files.size(); ++k)
    if (errors[k].empty()) m.outputs.push_back(files[k]);
  m.write(out);
  res.output = "simulated " + std::to_string(m.outputs.size()) + " of " + std::to_string(files.size()) +
               " deployments (" + to_string(sc.policy) + ")\n";
  return res;
}

// ---- build-dataset --------------------------------------------------------

CommandResult cmd_build_dataset(const RunConfig &cfg) {
  const Reader r(cfg);
  const auto deps = r.path("dataset.deployments"), results = r.path("dataset.results"), out = r.path("dataset.out");
  ExtractOptions opt;
  opt.rf = rf_config(r);
  opt.impute_missing = r.flag("dataset.impute", true);
  const double threshold = r.num("dataset.variance_threshold", 1e-12);
  if (threshold < 0) throw ConfigError("dataset.variance_threshold must be >= 0");
  const int jobs = r.jobs();
  check_not_input(out, {deps, results});
  const auto files = csv_files(results);
  if (files.empty()) throw ConfigError("no result files under " + results.string());

  std::vector<FeatureTable> tables(files.size());
  std::vector<GraphSample> graphs(files.size());
  std::vector<fs::path> dep_files(files.size());
  std::vector<std::string> labels;
  for (const auto &f : files) labels.push_back(f.generic_string());
  const auto errors = parallel_for(files.size(), jobs, [&](std::size_t k) {
    const auto res = read_results_csv(results / files[k]);
    dep_files[k] = fs::path(res.deployment_id + ".csv");
    const auto d = read_deployment_csv(deps / dep_files[k]);
    if (d.id() != res.deployment_id)
      throw ParseError("results for " + res.deployment_id + " paired with deployment " + d.id());
    tables[k] = extract_sta(d, res, opt);
    graphs[k] = build_graph(d, res, opt);
  });
  CommandResult res;
  collect(res, errors, labels);
  std::vector<FeatureTable> ok_tables;
  std::vector<GraphSample> ok_graphs;
  std::vector<fs::path> ok_results, ok_deps;
  for (std::size_t k = 0; k < files.size(); ++k)
    if (errors[k].empty()) {
      ok_tables.push_back(std::move(tables[k]));
      ok_graphs.push_back(std::move(graphs[k]));
      ok_results.push_back(files[k]);
      ok_deps.push_back(dep_files[k]);
    }
  if (ok_tables.empty()) {
    res.exit_code = 1;
    res.errors.push_back("no deployment could be processed");
    return res;
  }
  const auto sta = FeatureTable::concat(ok_tables);
  const auto bss = aggregate_bss(sta);
  write_features_csv(sta, out / "sta.csv");
  write_features_csv(bss, out / "bss.csv");
  const auto [nodes, edges] = graphs_to_csv(ok_graphs);
  csv::write_file(out / "graph_nodes.csv", nodes);
  csv::write_file(out / "graph_edges.csv", edges);
  const auto corr = correlation_matrix(sta);
  csv::write_file(out / "correlation.csv", to_csv(corr));
  csv::write_file(out / "feature_report.csv", to_csv(feature_report(sta, threshold)));

  Manifest m{"build-dataset", &cfg, {"dataset", "rf"}, {}, {{deps, ok_deps}, {results, ok_results}}, {}};
  m.outputs = {"sta.csv", "bss.csv", "graph_nodes.csv", "graph_edges.csv", "correlation.csv", "feature_report.csv"};
  m.write(out);
  res.output = "dataset: " + std::to_string(sta.rows()) + " STA rows, " + std::to_string(bss.rows()) +
               " BSS rows from " + std::to_string(ok_tables.size()) + " deployments\n";
  for (const auto &w : corr.warnings) res.output += "warning: " + w + "\n";
  return res;
}

// ---- train ----------------------------------------------------------------

CommandResult cmd_train(const RunConfig &cfg) {
  const Reader r(cfg);
  const auto data = r.path("train.data"), out = r.path("train.out");
  const auto model_arg = r.str("train.model", "forest");
  ModelSpec spec = parse_model_arg(model_arg);
  for (const auto &[k, v] : cfg.values())
    if (k.rfind("model.", 0) == 0) spec.set(k.substr(6), v);
  spec.validate();
  const auto grid = expand_grid(spec, cfg);
  const double validation = r.num("train.validation", 0.2);
  if (!(validation > 0 && validation < 1)) throw ConfigError("train.validation must be in (0, 1)");
  const auto split_seed = r.uint("train.split_seed", 1);
  const int jobs = r.jobs();
  for (const auto &g : grid)
    if (g.granularity != spec.granularity) throw ConfigError("grid cells must share one granularity");
  check_not_input(out, {data});

  const auto table = filter_scenarios(read_features_csv(data / table_file(spec.granularity)),
                                      r.str("train.scenarios"), "train.scenarios");
  const bool need_graphs =
      std::any_of(grid.begin(), grid.end(), [](const ModelSpec &s) { return s.family == Family::GraphNet; });
  std::vector<GraphSample> graphs;
  if (need_graphs) graphs = load_graphs(data);
  const auto *gp = need_graphs ? &graphs : nullptr;

  CommandResult res;
  Manifest m{"train", &cfg, {"train", "model", "grid"}, {}, {}, {}};
  ModelSpec chosen = spec;
  if (grid.size() > 1) {
    const auto [train_ids, val_ids] = split_deployments(table.deployment, 1.0 - validation, split_seed);
    const auto report =
        grid_search(grid, table.filter_deployments(train_ids), table.filter_deployments(val_ids), gp, jobs);
    chosen = report.cells[report.best].spec;
    csv::write_file(out / "grid.csv", to_csv(report));
    m.outputs.push_back("grid.csv");
    for (const auto &c : report.cells)
      if (!c.error.empty()) res.output += "grid cell " + std::to_string(c.index) + " failed: " + c.error + "\n";
    res.output += "grid search: best cell " + std::to_string(report.best) + " of " + std::to_string(grid.size()) +
                  " (validation RMSE " + csv::format(*report.cells[report.best].rmse) + ")\n";
    m.seeds.emplace_back("split", std::to_string(split_seed));
  }
  Model model(chosen);
  model.fit(table, gp);
  csv::write_file(out / "model.txt", model.serialize());
  m.outputs.push_back("model.txt");
  m.seeds.emplace_back("model", std::to_string(chosen.seed));
  m.inputs.push_back({data, {table_file(spec.granularity)}});
  if (need_graphs) m.inputs.back().second.insert(m.inputs.back().second.end(), {"graph_nodes.csv", "graph_edges.csv"});
  m.write(out);
  res.output += "trained " + to_string(chosen.family) + " (" + to_string(chosen.granularity) + ") on " +
                std::to_string(table.rows()) + " rows, " + std::to_string(model.columns().size()) +
                " columns; baseline " + csv::format_fixed(model.baseline(), 3) + " Mbps\n";
  return res;
}

// ---- predict --------------------------------------------------------------

CommandResult cmd_predict(const RunConfig &cfg) {
  const Reader r(cfg);
  auto model_path = r.path("predict.model");
  const auto data = r.path("predict.data"), out = r.path("predict.out");
  const auto scenarios = r.str("predict.scenarios");
  check_not_input(out, {data, model_path});
  if (fs::is_directory(model_path)) model_path /= "model.txt";
  const auto model = Model::deserialize(csv::read_file(model_path), model_path.string());
  const auto g = model.spec().granularity;
  const auto table = filter_scenarios(read_features_csv(data / table_file(g)), scenarios, "predict.scenarios");
  std::vector<GraphSample> graphs;
  const bool need_graphs = model.spec().family == Family::GraphNet;
  if (need_graphs) graphs = load_graphs(data);
  const auto pred = model.predict(table, need_graphs ? &graphs : nullptr);

  std::string text = std::string("# ") + kPredictionsMagic + "\n";
  text += "# model=" + to_string(model.spec().family) + ",granularity=" + to_string(g) +
          ",baseline=" + csv::format(model.baseline()) + "\n";
  text += "scenario,deployment,bss,entity,prediction,label\n";
  for (std::size_t i = 0; i < table.rows(); ++i)
    text += csv::join({scenario_of(table.deployment[i]), table.deployment[i], table.bss[i], table.entity[i],
                       csv::format(pred[i]), table.labelled() ? csv::format(table.labels[i]) : ""}) +
            "\n";
  csv::write_file(out / "predictions.csv", text);

  Manifest m{"predict", &cfg, {"predict"}, {}, {}, {"predictions.csv"}};
  m.inputs.push_back({model_path.parent_path(), {model_path.filename()}});
  m.inputs.push_back({data, {table_file(g)}});
  m.write(out);
  CommandResult res;
  res.output = "predicted " + std::to_string(table.rows()) + " " + to_string(g) + " rows\n";
  return res;
}

// ---- evaluate -------------------------------------------------------------

CommandResult cmd_evaluate(const RunConfig &cfg) {
  const Reader r(cfg);
  auto pred_path = r.path("evaluate.predictions");
  const auto out = r.path("evaluate.out");
  EvalOptions opt;
  opt.bin_width = r.num("evaluate.bin_width", opt.bin_width);
  opt.histogram_max = r.num("evaluate.histogram_max", opt.histogram_max);
  opt.threshold = r.num("evaluate.threshold", opt.threshold);
  if (!(opt.bin_width > 0) || !(opt.histogram_max > 0) || !(opt.threshold > 0))
    throw ConfigError("evaluate.bin_width, histogram_max and threshold must be > 0");
  std::optional<double> assert_ratio;
  if (cfg.has("evaluate.assert_mae_ratio")) {
    assert_ratio = r.num("evaluate.assert_mae_ratio", 0);
    if (*assert_ratio <= 0) throw ConfigError("evaluate.assert_mae_ratio must be > 0");
  }
  check_not_input(out, {pred_path});
  if (fs::is_directory(pred_path)) pred_path /= "predictions.csv";

  const auto doc = csv::read(pred_path);
  doc.require_magic(kPredictionsMagic);
  doc.require_header({"scenario", "deployment", "bss", "entity", "prediction", "label"});
  const auto meta = [&](const char *key) {
    const auto v = doc.meta(key);
    if (!v) throw ParseError(doc.source + ": missing '" + key + "' in the header comment");
    return *v;
  };
  const auto g = parse_granularity(meta("granularity"));
  const auto model_name = meta("model");
  const auto baseline_text = meta("baseline");
  double baseline = 0;
  const auto parsed = std::from_chars(baseline_text.data(), baseline_text.data() + baseline_text.size(), baseline);
  if (parsed.ec != std::errc{} || parsed.ptr != baseline_text.data() + baseline_text.size())
    throw ParseError(doc.source + ": baseline '" + baseline_text + "' is not a number");

  std::vector<ScenarioPredictions> scenarios;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const auto &name = doc.text(i, 0);
    if (scenarios.empty() || scenarios.back().scenario != name) {
      for (const auto &s : scenarios)
        if (s.scenario == name) doc.fail(i, 0, "scenario rows are not contiguous");
      scenarios.push_back({name, {}, {}});
      scenarios.back().table.schema = FeatureSchema::from_names(g, {});
    }
    auto &sc = scenarios.back();
    const auto label = doc.optional_number(i, 5);
    if (sc.table.rows() > 0 && label.has_value() != sc.table.labelled())
      doc.fail(i, 5, "labelled and unlabelled rows mixed in one scenario");
    sc.table.add_row(doc.text(i, 1), doc.text(i, 2), doc.text(i, 3), {}, label);
    sc.predictions.push_back(doc.number(i, 4));
  }
  const auto report = make_report(model_name, baseline, scenarios, opt);
  write_report(report, out);
  Manifest m{"evaluate", &cfg, {"evaluate"}, {}, {{pred_path.parent_path(), {pred_path.filename()}}}, {}};
  m.outputs = {"mae_by_scenario.csv", "error_histogram.csv", "label_boxplot.csv", "share_below.csv"};
  m.write(out);

  CommandResult res;
  res.output = summary_table(report);
  if (assert_ratio) {
    const double ratio = report.mae_ratio();
    if (ratio > *assert_ratio) {
      res.exit_code = 1;
      res.errors.push_back("MAE ratio " + csv::format_fixed(ratio, 4) + " exceeds the asserted " +
                           csv::format(*assert_ratio));
    }
  }
  return res;
}

} // namespace cbnet
