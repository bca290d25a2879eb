#pragma once

// Link budget: log-distance path loss, per-20 MHz received power, SINR and
// the SINR -> rate lookup used by the MAC simulator.

#include "cbnet/deployment.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbnet {

inline constexpr double kNoPower = -std::numeric_limits<double>::infinity();

struct McsEntry {
  double min_sinr_db;
  double rate_mbps; // per 20 MHz channel
  friend bool operator==(const McsEntry &, const McsEntry &) = default;
};

/// Four-entry table (8.6/17.2/28.7/57.5 Mbps at 2/9/18/30 dB); the default.
std::vector<McsEntry> desk_mcs_table();
/// Twelve single-stream 802.11ax rates (MCS 0-11, 20 MHz, 0.8 us GI).
std::vector<McsEntry> he_mcs_table();
/// "desk" or "he"; throws ConfigError otherwise.
std::vector<McsEntry> mcs_preset(const std::string &name);

struct RfConfig {
  double pl0_db = 40.0;
  double gamma = 4.0;
  double noise_floor_dbm = -95.0;
  std::vector<McsEntry> mcs_table = desk_mcs_table();
  // Log-normal shadowing per link; 0 disables it.
  double shadowing_sigma_db = 0.0;
  std::uint64_t shadowing_seed = 0;

  void validate() const;
};

inline double dbm_to_mw(double dbm) { return dbm == kNoPower ? 0.0 : std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return mw <= 0.0 ? kNoPower : 10.0 * std::log10(mw); }

/// Distances below 0.1 m are clamped to 0.1 m.
double path_loss(const RfConfig &cfg, double distance_m);

/// Received power per 20 MHz channel when `tx_power_dbm` is spread over `bond_width` channels.
double rssi(const RfConfig &cfg, double tx_power_dbm, int bond_width, double distance_m);

double sinr(double rssi_dbm, std::span<const double> interference_dbm, double noise_floor_dbm);

/// Index of the highest MCS entry decodable at `sinr_db`, if any.
std::optional<std::size_t> select_mcs(const RfConfig &cfg, double sinr_db);

/// bond_width x per-channel rate of the best decodable MCS; 0 if none.
double rate(const RfConfig &cfg, double sinr_db, int bond_width);

/// Extra loss in dB on the link between two named nodes (symmetric); 0 unless shadowing is on.
double link_shadowing_db(const RfConfig &cfg, const std::string &a, const std::string &b);

/// Power at AP i from AP j transmitting over the widest bond its range allows, dBm.
/// The diagonal holds kNoPower.
std::vector<std::vector<double>> interference_map(const RfConfig &cfg, const Deployment &d);

struct LinkObservables {
  double rssi_dbm = 0;
  double interference_dbm = kNoPower;
  double sinr_db = 0;

  /// Build with `sinr_db` derived from the other two fields.
  static LinkObservables from(double rssi_dbm, double interference_dbm, double noise_floor_dbm);
};

} // namespace cbnet
