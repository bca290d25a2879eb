#pragma once

// Batch pipeline stages behind the command-line tool:
//   generate -> simulate -> build-dataset -> train -> predict -> evaluate
//
// Configuration is a flat text file of `section.key = value` lines ('#'
// starts a comment). Flags override file values. Every value is parsed and
// validated before a stage touches the file system. Keys:
//
//   run.jobs                     worker threads (results do not depend on it)
//   generate.specs               comma list of scenario names, or "training" / "test" / "all"
//   generate.count               deployments per scenario (0 = scenario default)
//   generate.desk_scale          halve per-AP STA bounds
//   generate.seed  generate.out
//   scenario.name                custom scenario, generated next to generate.specs
//   scenario.map_width  scenario.map_height  scenario.ap_count
//   scenario.sta_min  scenario.sta_max  scenario.deployment_count
//   placement.sta_radius  placement.tx_power  placement.cca  placement.ap_jitter
//   simulate.in  simulate.out  simulate.policy  simulate.seed  simulate.duration
//   simulate.slot_us  simulate.difs_us  simulate.cw_slots  simulate.txop_ms
//   rf.pl0_db  rf.gamma  rf.noise_floor_dbm  rf.mcs  rf.shadowing_sigma_db  rf.shadowing_seed
//   dataset.deployments  dataset.results  dataset.out  dataset.impute  dataset.variance_threshold
//   train.data  train.out  train.model  train.scenarios  train.validation  train.split_seed
//   model.*                      model spec keys (see predictors.hpp), applied over train.model
//   grid.<model key>             `a|b|c` alternatives; train runs a grid search over their product
//   predict.model  predict.data  predict.out  predict.scenarios
//   evaluate.predictions  evaluate.out  evaluate.bin_width  evaluate.histogram_max
//   evaluate.threshold  evaluate.assert_mae_ratio
//
// Each output directory gets manifest.txt: command, tool version, the
// non-path configuration with its hash, and a content hash of every input and
// output file. No timestamps, so identical runs give identical manifests.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cbnet {

inline constexpr const char *kToolVersion = "0.1.0";
inline constexpr const char *kManifestMagic = "cbnet-manifest v1";
inline constexpr const char *kPredictionsMagic = "cbnet-predictions v1";

class RunConfig {
public:
  /// Throws ConfigError naming the line on malformed input or a repeated key.
  static RunConfig parse(std::string_view text, const std::string &source = "<config>");
  static RunConfig load(const std::filesystem::path &path);

  /// Override one key (flags). Throws ConfigError on an unknown key.
  void set(const std::string &key, const std::string &value);
  /// "key=value" form, as given to --set.
  void set_assignment(const std::string &assignment);
  std::optional<std::string> get(const std::string &key) const;
  bool has(const std::string &key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string> &values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

/// Throws ConfigError unless `key` is one of the documented keys.
void check_config_key(const std::string &key);

struct CommandResult {
  int exit_code = 0;
  std::string output;              // for standard output
  std::vector<std::string> errors; // one per failed file or check
};

CommandResult cmd_generate(const RunConfig &cfg);
CommandResult cmd_simulate(const RunConfig &cfg);
CommandResult cmd_build_dataset(const RunConfig &cfg);
CommandResult cmd_train(const RunConfig &cfg);
CommandResult cmd_predict(const RunConfig &cfg);
CommandResult cmd_evaluate(const RunConfig &cfg);

} // namespace cbnet
