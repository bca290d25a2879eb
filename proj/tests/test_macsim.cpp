#include "doctest.h"

#include "cbnet/error.hpp"
#include "cbnet/macsim.hpp"

#include "oracles.hpp"

#include <filesystem>

using namespace cbnet;

namespace {

Node make_ap(const std::string &bss, double x, double y, int primary, int lo, int hi) {
  Node ap;
  ap.code = "AP_" + bss;
  ap.kind = NodeKind::AP;
  ap.bss_id = bss;
  ap.position = {x, y, 0};
  ap.primary = ChannelId(primary);
  ap.range = ChannelRange(lo, hi);
  return ap;
}

Node make_sta(const Node &ap, int k, double dx, double dy) {
  Node s = ap;
  s.kind = NodeKind::STA;
  s.code = "STA_" + ap.bss_id + std::to_string(k);
  s.position = {ap.position.x + dx, ap.position.y + dy, 0};
  return s;
}

Deployment isolated(int primary, int lo, int hi) {
  Deployment d;
  d.scenario_id = "iso";
  d.map_width = d.map_height = 20;
  auto ap = make_ap("A", 10, 10, primary, lo, hi);
  d.bsss.push_back({ap, {make_sta(ap, 1, 1, 0)}});
  return d;
}

Deployment symmetric_pair() {
  Deployment d;
  d.scenario_id = "pair";
  d.map_width = 60;
  d.map_height = 20;
  auto a = make_ap("A", 20, 10, 3, 3, 3);
  auto b = make_ap("B", 40, 10, 3, 3, 3);
  d.bsss.push_back({a, {make_sta(a, 1, -1, 0)}});
  d.bsss.push_back({b, {make_sta(b, 1, 1, 0)}});
  return d;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double link_rate(const SimConfig &cfg, int width) {
  // STA at 1 m: per-channel received power tx - 10 log10(w) - pl0, no interference.
  const double rssi_dbm = 20 - 10 * std::log10(width) - cfg.rf.pl0_db;
  const double snr = rssi_dbm - cfg.rf.noise_floor_dbm;
  std::vector<std::pair<double, double>> table;
  for (auto e : cfg.rf.mcs_table) table.emplace_back(e.min_sinr_db, e.rate_mbps);
  return oracle::table_rate(table, snr, width);
}

double oracle_iso(const SimConfig &cfg, double mean_rate) {
  return oracle::isolated_throughput(mean_rate, cfg.txop_ms * 1000, cfg.difs_us, cfg.slot_us, cfg.cw_slots);
}

} // namespace

TEST_CASE("config validation") {
  SimConfig c;
  CHECK_NOTHROW(c.validate());
  c.duration_s = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.cw_slots = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.txop_ms = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("isolated AM BSS matches the renewal oracle") {
  SimConfig cfg;
  cfg.duration_s = 20;
  cfg.policy = Policy::AM;
  const auto r = simulate(isolated(0, 0, 7), cfg);
  REQUIRE(r.aps.size() == 1);
  const double expect = oracle_iso(cfg, link_rate(cfg, 8));
  CHECK(rel(r.aps[0].throughput_mbps, expect) < 0.05);
  const double util = expect / link_rate(cfg, 8);
  for (int c = 0; c < 8; ++c) CHECK(std::abs(r.aps[0].airtime[c] - util) < 0.05 * util);
  CHECK(r.stats.lost_txops == 0);
}

TEST_CASE("SCB and AM agree in isolation") {
  for (auto [p, lo, hi] : {std::tuple{0, 0, 7}, std::tuple{5, 4, 5}, std::tuple{2, 0, 3}, std::tuple{6, 6, 6}}) {
    SimConfig cfg;
    cfg.duration_s = 10;
    cfg.policy = Policy::AM;
    const double am = simulate(isolated(p, lo, hi), cfg).aps[0].throughput_mbps;
    cfg.policy = Policy::SCB;
    const double scb = simulate(isolated(p, lo, hi), cfg).aps[0].throughput_mbps;
    CHECK(rel(scb, am) < 0.01);
  }
}

TEST_CASE("isolated PU BSS matches the oracle at the mean bond rate") {
  // PU picks uniformly among the nested bonds {1, 2, 4, 8} wide, so it does
  // not match AM in isolation; its throughput follows the mean link rate.
  SimConfig cfg;
  cfg.duration_s = 20;
  cfg.policy = Policy::PU;
  const auto r = simulate(isolated(0, 0, 7), cfg);
  const double mean_rate = (link_rate(cfg, 1) + link_rate(cfg, 2) + link_rate(cfg, 4) + link_rate(cfg, 8)) / 4;
  CHECK(rel(r.aps[0].throughput_mbps, oracle_iso(cfg, mean_rate)) < 0.05);
  const double util = oracle_iso(cfg, 1.0);
  CHECK(rel(r.aps[0].airtime[0], util) < 0.05);
  CHECK(rel(r.aps[0].airtime[1], 0.75 * util) < 0.05);
  CHECK(rel(r.aps[0].airtime[3], 0.5 * util) < 0.05);
  CHECK(rel(r.aps[0].airtime[7], 0.25 * util) < 0.05);
}

TEST_CASE("symmetric co-channel pair shares the channel") {
  SimConfig cfg;
  cfg.duration_s = 20;
  const auto d = symmetric_pair();
  const auto r = simulate(d, cfg);
  Deployment alone = d;
  alone.bsss.pop_back();
  const double iso = simulate(alone, cfg).aps[0].throughput_mbps;
  for (const auto &ap : r.aps) {
    CHECK(std::abs(ap.airtime[3] - 0.5) < 0.05);
    CHECK(std::abs(ap.throughput_mbps / iso - 0.5) < 0.1);
    REQUIRE(ap.mean_interference_dbm);
  }
  CHECK(r.stats.simultaneous_starts > 0);
  CHECK(r.stats.sensing_violations == 0);
}

TEST_CASE("hidden pair transmits concurrently") {
  auto d = symmetric_pair();
  d.map_width = 400;
  d.bsss[1].ap.position.x = d.bsss[1].stas[0].position.x = 300;
  d.bsss[1].stas[0].position.x += 1;
  SimConfig cfg;
  cfg.duration_s = 5;
  const auto r = simulate(d, cfg);
  const double util = oracle_iso(cfg, 1.0);
  for (const auto &ap : r.aps) CHECK(rel(ap.airtime[3], util) < 0.05);
}

TEST_CASE("SCB rejects a malformed range before simulating") {
  auto d = isolated(1, 1, 2);
  SimConfig cfg;
  cfg.policy = Policy::SCB;
  CHECK_THROWS_AS(simulate(d, cfg), ConfigError);
  cfg.policy = Policy::AM;
  CHECK_NOTHROW(simulate(d, cfg));
}

TEST_CASE("property: conservation, airtime bounds and sensing audit on generated deployments") {
  auto spec = desk_scale(find_spec("training2c"));
  SimConfig cfg;
  cfg.duration_s = 0.5;
  for (auto policy : {Policy::AM, Policy::PU}) {
    cfg.policy = policy;
    for (int i = 0; i < 15; ++i) {
      const auto d = generate(spec, i, 77);
      const auto r = simulate(d, cfg);
      REQUIRE(r.aps.size() == d.bsss.size());
      CHECK(r.stats.sensing_violations == 0);
      for (std::size_t k = 0; k < r.aps.size(); ++k) {
        const auto &ap = r.aps[k];
        double sum = 0;
        for (const auto &s : ap.stas) {
          CHECK(s.throughput_mbps >= 0);
          sum += s.throughput_mbps;
        }
        CHECK(ap.throughput_mbps == sum);
        const auto range = d.bsss[k].ap.range;
        for (int c = 0; c < kNumChannels; ++c) {
          CHECK(ap.airtime[c] >= 0);
          CHECK(ap.airtime[c] <= 1);
          if (!range.contains(ChannelId(c))) CHECK(ap.airtime[c] == 0);
        }
      }
    }
  }
}

TEST_CASE("simulation is deterministic and batch matches element-wise") {
  auto spec = desk_scale(find_spec("training1b"));
  SimConfig cfg;
  cfg.duration_s = 0.3;
  std::vector<Deployment> ds;
  for (int i = 0; i < 4; ++i) ds.push_back(generate(spec, i, 3));
  const auto a = simulate(ds[1], cfg);
  const auto b = simulate(ds[1], cfg);
  CHECK(a == b);
  CHECK(to_csv(a) == to_csv(b));
  CHECK(batch_simulate({}, cfg, 3).empty());
  const auto one = batch_simulate({ds[1]}, cfg, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == a);
  const auto serial = batch_simulate(ds, cfg, 1);
  const auto parallel = batch_simulate(ds, cfg, 3);
  REQUIRE(serial.size() == 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(serial[i] == parallel[i]);
    CHECK(serial[i].deployment_id == ds[i].id());
  }
}

TEST_CASE("batch errors carry deployment indices") {
  std::vector<Deployment> ds = {isolated(0, 0, 7), isolated(1, 1, 2)};
  SimConfig cfg;
  cfg.duration_s = 0.1;
  cfg.policy = Policy::SCB;
  CHECK_THROWS_WITH(batch_simulate(ds, cfg, 2), doctest::Contains("[1] deployment iso/0"));
}

TEST_CASE("results CSV") {
  SimConfig cfg;
  cfg.duration_s = 0.2;
  SUBCASE("minimal file") {
    const auto r = simulate(isolated(0, 0, 0), cfg);
    const auto text = to_csv(r);
    CHECK(text.rfind("# cbnet-result v1\n", 0) == 0);
    CHECK(text.find("node_code,node_type,bss_id,throughput_mbps,mean_rssi_dbm,mean_sinr_db,mean_interference_dbm,"
                    "airtime_ch0,airtime_ch1,airtime_ch2,airtime_ch3,airtime_ch4,airtime_ch5,airtime_ch6,airtime_ch7\n") !=
          std::string::npos);
    CHECK(result_from_csv(text) == r);
  }
  SUBCASE("training1a-shaped file round trips through disk") {
    const auto d = generate(desk_scale(find_spec("training1a")), 0, 11);
    const auto r = simulate(d, cfg);
    const auto path = std::filesystem::temp_directory_path() / "cbnet_test_macsim" / "r.csv";
    write_results_csv(r, path);
    CHECK(read_results_csv(path) == r);
    std::filesystem::remove_all(path.parent_path());
  }
  SUBCASE("malformed files") {
    const auto r = simulate(symmetric_pair(), cfg);
    const auto text = to_csv(r);
    auto bad = text;
    const auto pos = bad.find("STA_A1,1,A,");
    bad.replace(pos + 11, 0, "x");
    CHECK_THROWS_WITH_AS(result_from_csv(bad), doctest::Contains("throughput_mbps"), ParseError);

    bad = text;
    bad.replace(bad.find(",airtime_ch7"), 12, "");
    CHECK_THROWS_AS(result_from_csv(bad), ParseError);

    // AP throughput not equal to the sum of its STAs.
    bad = text;
    const auto ap = bad.find("AP_A,0,A,");
    bad.replace(ap + 9, 0, "1");
    CHECK_THROWS_AS(result_from_csv(bad), ParseError);
  }
}
