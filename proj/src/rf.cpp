#include "cbnet/rf.hpp"

#include "cbnet/error.hpp"
#include "cbnet/rng.hpp"

#include <algorithm>
#include <cmath>

namespace cbnet {

namespace {

void require_width(int w) {
  if (w != 1 && w != 2 && w != 4 && w != 8) throw InvalidArgument("bond width " + std::to_string(w) + " not in {1,2,4,8}");
}

} // namespace

std::vector<McsEntry> desk_mcs_table() { return {{2, 8.6}, {9, 17.2}, {18, 28.7}, {30, 57.5}}; }

std::vector<McsEntry> he_mcs_table() {
  return {{2, 8.6},    {5, 17.2},   {9, 25.8},   {11, 34.4},  {15, 51.6},  {18, 68.8},
          {20, 77.4},  {25, 86.0},  {29, 103.2}, {31, 114.7}, {33, 129.0}, {34, 143.4}};
}

std::vector<McsEntry> mcs_preset(const std::string &name) {
  if (name == "desk") return desk_mcs_table();
  if (name == "he") return he_mcs_table();
  throw ConfigError("unknown MCS table preset '" + name + "' (expected desk or he)");
}

void RfConfig::validate() const {
  if (!(noise_floor_dbm < 0)) throw ConfigError("rf.noise_floor_dbm must be below 0 dBm");
  if (!(gamma > 0)) throw ConfigError("rf.gamma must be positive");
  if (mcs_table.empty()) throw ConfigError("rf MCS table is empty");
  for (std::size_t i = 1; i < mcs_table.size(); ++i)
    if (!(mcs_table[i].min_sinr_db > mcs_table[i - 1].min_sinr_db) ||
        !(mcs_table[i].rate_mbps > mcs_table[i - 1].rate_mbps))
      throw ConfigError("rf MCS table must be strictly increasing in both SINR and rate");
  if (!(mcs_table.front().rate_mbps > 0)) throw ConfigError("rf MCS rates must be positive");
  if (shadowing_sigma_db < 0) throw ConfigError("rf.shadowing_sigma_db must be >= 0");
}

double path_loss(const RfConfig &cfg, double distance_m) {
  return cfg.pl0_db + 10.0 * cfg.gamma * std::log10(std::max(distance_m, 0.1));
}

double rssi(const RfConfig &cfg, double tx_power_dbm, int bond_width, double distance_m) {
  require_width(bond_width);
  return tx_power_dbm - 10.0 * std::log10(static_cast<double>(bond_width)) - path_loss(cfg, distance_m);
}

double sinr(double rssi_dbm, std::span<const double> interference_dbm, double noise_floor_dbm) {
  double denom = dbm_to_mw(noise_floor_dbm);
  for (double i : interference_dbm) denom += dbm_to_mw(i);
  return 10.0 * std::log10(dbm_to_mw(rssi_dbm) / denom);
}

std::optional<std::size_t> select_mcs(const RfConfig &cfg, double sinr_db) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cfg.mcs_table.size(); ++i)
    if (cfg.mcs_table[i].min_sinr_db <= sinr_db) best = i;
  return best;
}

double rate(const RfConfig &cfg, double sinr_db, int bond_width) {
  require_width(bond_width);
  auto mcs = select_mcs(cfg, sinr_db);
  return mcs ? bond_width * cfg.mcs_table[*mcs].rate_mbps : 0.0;
}

double link_shadowing_db(const RfConfig &cfg, const std::string &a, const std::string &b) {
  if (cfg.shadowing_sigma_db == 0.0) return 0.0;
  const std::string &lo = std::min(a, b), &hi = std::max(a, b);
  Rng rng(derive_seed(cfg.shadowing_seed, fnv1a(hi, fnv1a(lo + "|"))));
  return cfg.shadowing_sigma_db * rng.normal();
}

std::vector<std::vector<double>> interference_map(const RfConfig &cfg, const Deployment &d) {
  const std::size_t n = d.bsss.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, kNoPower));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Node &rx = d.bsss[i].ap, &tx = d.bsss[j].ap;
      const int width = enumerate_valid_bonds(tx.primary, tx.range).back().width();
      m[i][j] = rssi(cfg, tx.tx_power_dbm, width, distance(rx.position, tx.position)) -
                link_shadowing_db(cfg, rx.code, tx.code);
    }
  return m;
}

LinkObservables LinkObservables::from(double rssi_dbm, double interference_dbm, double noise_floor_dbm) {
  const double interf[] = {interference_dbm};
  return {rssi_dbm, interference_dbm, sinr(rssi_dbm, interf, noise_floor_dbm)};
}

} // namespace cbnet
