#pragma once

#include "cbnet/channelization.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cbnet {

enum class NodeKind { AP = 0, STA = 1 };

struct Position {
  double x = 0;
  double y = 0;
  double z = 0;
  friend bool operator==(const Position &, const Position &) = default;
};

double distance(const Position &a, const Position &b);

struct Node {
  std::string code;
  NodeKind kind = NodeKind::STA;
  std::string bss_id;
  Position position;
  ChannelId primary{0};
  ChannelRange range{0, 0};
  double tx_power_dbm = 20.0;
  double cca_dbm = -82.0;
  friend bool operator==(const Node &, const Node &) = default;
};

struct Bss {
  Node ap;
  std::vector<Node> stas;
  friend bool operator==(const Bss &, const Bss &) = default;
};

struct Deployment {
  std::string scenario_id;
  int index = 0;
  double map_width = 0;
  double map_height = 0;
  std::vector<Bss> bsss;

  /// "<scenario_id>/<index>", the key used by datasets and splits.
  std::string id() const { return scenario_id + "/" + std::to_string(index); }
  std::size_t sta_count() const;
  /// Throws InvalidArgument naming the offending node on any broken invariant.
  void validate() const;
  friend bool operator==(const Deployment &, const Deployment &) = default;
};

/// Placement and radio defaults applied by `generate`.
struct PlacementParams {
  double sta_radius_m = 15.0;
  double tx_power_dbm = 20.0;
  double cca_dbm = -82.0;
  double z_m = 0.0;
  double ap_jitter = 0.25; // fraction of the grid cell size
};

struct ScenarioSpec {
  std::string name;
  double map_width = 0;
  double map_height = 0;
  int ap_count = 1;
  int sta_min = 1;
  int sta_max = 1;
  int deployment_count = 1;
  PlacementParams placement;

  /// Throws ConfigError on non-positive sizes or counts.
  void validate() const;
};

/// The ten scenario families of the challenge dataset (six training, four test).
std::vector<ScenarioSpec> builtin_specs();

/// Look up a builtin spec by name; the error lists the valid names.
ScenarioSpec find_spec(const std::string &name);

/// Desk-scale variant: per-AP STA bounds halved (lower bound rounded up, at least 1).
ScenarioSpec desk_scale(ScenarioSpec spec);

/// Deterministic random deployment number `deployment_index` of `spec`.
Deployment generate(const ScenarioSpec &spec, int deployment_index, std::uint64_t seed);

/// BSS identifiers A, B, ..., Z, AA, AB, ...
std::string bss_letter(int index);

std::string to_csv(const Deployment &d);
Deployment deployment_from_csv(std::string_view text, const std::string &source = "<memory>");
void write_csv(const Deployment &d, const std::filesystem::path &path);
Deployment read_deployment_csv(const std::filesystem::path &path);

inline constexpr const char *kDeploymentMagic = "cbnet-deployment v1";

} // namespace cbnet
