#include "cbnet/error.hpp"
#include "cbnet/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace {

struct FlagKey {
  const char *flag;
  const char *key;
  const char *help;
};

struct Command {
  const char *name;
  const char *help;
  std::vector<FlagKey> flags;
  std::function<cbnet::CommandResult(const cbnet::RunConfig &)> run;
};

const std::vector<Command> &commands() {
  static const std::vector<Command> list = {
      {"generate",
       "write random deployments as <out>/<scenario>/<index>.csv",
       {{"--spec", "generate.specs", "scenario names, comma separated, or training/test/all"},
        {"--seed", "generate.seed", "placement seed"},
        {"--count", "generate.count", "deployments per scenario"},
        {"--desk-scale", "generate.desk_scale", "true to halve per-AP STA counts"},
        {"--out", "generate.out", "output directory"}},
       cbnet::cmd_generate},
      {"simulate",
       "simulate every deployment under --in",
       {{"--in", "simulate.in", "deployment directory"},
        {"--out", "simulate.out", "results directory"},
        {"--policy", "simulate.policy", "SCB, AM or PU"},
        {"--seed", "simulate.seed", "simulation seed"},
        {"--duration", "simulate.duration", "simulated seconds"}},
       cbnet::cmd_simulate},
      {"build-dataset",
       "extract STA/BSS feature tables and graphs",
       {{"--deployments", "dataset.deployments", "deployment directory"},
        {"--results", "dataset.results", "results directory"},
        {"--out", "dataset.out", "dataset directory"}},
       cbnet::cmd_build_dataset},
      {"train",
       "fit a model (or grid-search one) on a dataset",
       {{"--data", "train.data", "dataset directory"},
        {"--out", "train.out", "model directory"},
        {"--model", "train.model", "preset:NAME or a family name"},
        {"--scenarios", "train.scenarios", "train on these scenarios only"}},
       cbnet::cmd_train},
      {"predict",
       "predict throughput for a dataset",
       {{"--model", "predict.model", "model directory or file"},
        {"--data", "predict.data", "dataset directory"},
        {"--out", "predict.out", "predictions directory"},
        {"--scenarios", "predict.scenarios", "predict these scenarios only"}},
       cbnet::cmd_predict},
      {"evaluate",
       "score predictions against labels and the mean baseline",
       {{"--predictions", "evaluate.predictions", "predictions directory or file"},
        {"--out", "evaluate.out", "report directory"},
        {"--bin-width", "evaluate.bin_width", "histogram bin width in Mbps"},
        {"--threshold", "evaluate.threshold", "share-below threshold in Mbps"},
        {"--assert-mae-ratio", "evaluate.assert_mae_ratio", "fail when model MAE exceeds this times baseline MAE"}},
       cbnet::cmd_evaluate},
  };
  return list;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"cbnet: channel-bonding WLAN throughput pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  std::string jobs;
  app.add_option("--config", config_path, "flat `section.key = value` configuration file");
  app.add_option("--set", overrides, "override one configuration entry, key=value (repeatable)");
  app.add_option("--jobs", jobs, "worker threads");

  const auto &cmds = commands();
  std::vector<CLI::App *> subs;
  std::vector<std::vector<std::string>> values(cmds.size());
  for (std::size_t c = 0; c < cmds.size(); ++c) {
    auto *sub = app.add_subcommand(cmds[c].name, cmds[c].help);
    values[c].resize(cmds[c].flags.size());
    for (std::size_t f = 0; f < cmds[c].flags.size(); ++f)
      sub->add_option(cmds[c].flags[f].flag, values[c][f], cmds[c].flags[f].help);
    subs.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    cbnet::RunConfig cfg = config_path.empty() ? cbnet::RunConfig{} : cbnet::RunConfig::load(config_path);
    for (const auto &o : overrides) cfg.set_assignment(o);
    if (!jobs.empty()) cfg.set("run.jobs", jobs);
    for (std::size_t c = 0; c < cmds.size(); ++c) {
      if (!subs[c]->parsed()) continue;
      for (std::size_t f = 0; f < cmds[c].flags.size(); ++f)
        if (subs[c]->count(cmds[c].flags[f].flag) > 0) cfg.set(cmds[c].flags[f].key, values[c][f]);
      const auto res = cmds[c].run(cfg);
      std::cout << res.output;
      for (const auto &e : res.errors) std::cerr << "error: " << e << "\n";
      return res.exit_code;
    }
  } catch (const cbnet::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
