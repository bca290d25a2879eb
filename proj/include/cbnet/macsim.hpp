#pragma once

// Discrete-event CSMA/CA simulation of a deployment under one dynamic
// channel bonding policy. The atomic unit of airtime is a TXOP: every AP is
// full-buffer downlink, contends on its primary channel with a fixed
// contention window, and on backoff expiry asks the policy which idle
// channels to bond for the next TXOP.

#include "cbnet/channelization.hpp"
#include "cbnet/deployment.hpp"
#include "cbnet/rf.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cbnet {

struct SimConfig {
  double duration_s = 2.0;
  double slot_us = 9.0;
  double difs_us = 34.0;
  int cw_slots = 16; // backoff drawn uniformly from [0, cw_slots)
  double txop_ms = 5.0;
  Policy policy = Policy::AM;
  std::uint64_t seed = 1;
  RfConfig rf;

  void validate() const;
};

struct StaResult {
  std::string code;
  std::string bss_id;
  double throughput_mbps = 0;
  // Power averages over the TXOPs addressed to this STA; empty if it got none.
  std::optional<double> mean_rssi_dbm;
  std::optional<double> mean_sinr_db;
  std::optional<double> mean_interference_dbm;
  friend bool operator==(const StaResult &, const StaResult &) = default;
};

struct ApResult {
  std::string code;
  std::string bss_id;
  double throughput_mbps = 0; // always the sum of `stas` throughputs
  std::array<double, kNumChannels> airtime{};
  // Time-averaged power sensed on the primary channel from other BSSs.
  std::optional<double> mean_interference_dbm;
  std::vector<StaResult> stas;
  friend bool operator==(const ApResult &, const ApResult &) = default;
};

/// Diagnostic counters; not part of the results file.
struct SimStats {
  std::uint64_t txops = 0;
  std::uint64_t lost_txops = 0;
  std::uint64_t empty_selections = 0;  // backoff expired but the policy returned none
  std::uint64_t simultaneous_starts = 0;
  std::uint64_t sensing_violations = 0; // must stay 0, see check in simulate()
};

struct SimResult {
  std::string deployment_id;
  Policy policy = Policy::AM;
  std::vector<ApResult> aps;
  SimStats stats;

  friend bool operator==(const SimResult &a, const SimResult &b) {
    return a.deployment_id == b.deployment_id && a.policy == b.policy && a.aps == b.aps;
  }
};

/// Throws ConfigError up front if the policy cannot run on some BSS range.
void check_policy_compatibility(const Deployment &d, Policy policy);

SimResult simulate(const Deployment &d, const SimConfig &cfg);

/// Element-wise simulate over `jobs` worker threads; output order matches input.
/// Failures are collected and rethrown together, tagged with their indices.
std::vector<SimResult> batch_simulate(const std::vector<Deployment> &deployments, const SimConfig &cfg, int jobs = 1);

std::string to_csv(const SimResult &r);
SimResult result_from_csv(std::string_view text, const std::string &source = "<memory>");
void write_results_csv(const SimResult &r, const std::filesystem::path &path);
SimResult read_results_csv(const std::filesystem::path &path);

inline constexpr const char *kResultMagic = "cbnet-result v1";

} // namespace cbnet
