#include "cbnet/macsim.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/error.hpp"
#include "cbnet/parallel.hpp"
#include "cbnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>

namespace cbnet {

void SimConfig::validate() const {
  if (!(duration_s > 0) || !(slot_us > 0) || !(difs_us > 0) || !(txop_ms > 0))
    throw ConfigError("simulation durations (duration, slot, difs, txop) must be positive");
  if (cw_slots < 1) throw ConfigError("sim.cw_slots must be >= 1");
  rf.validate();
}

void check_policy_compatibility(const Deployment &d, Policy policy) {
  if (policy != Policy::SCB) return;
  for (const auto &b : d.bsss) {
    try {
      require_scb_range(b.ap.range);
    } catch (const ConfigError &e) {
      throw ConfigError("deployment " + d.id() + ", " + b.ap.code + ": " + e.what());
    }
  }
}

namespace {

using Nanos = std::int64_t;

Nanos to_ns(double micros) { return static_cast<Nanos>(std::llround(micros * 1000.0)); }

struct Transmission {
  std::size_t ap;
  std::size_t sta;  // global STA index
  BondSet bond;
  Nanos start;
  Nanos end;
  double signal_mw;     // per 20 MHz at the receiver
  double worst_interference_mw = 0;
  double mcs_threshold_db;
  double rate_mbps;
  bool lost = false;
};

enum class ApState { Frozen, Contending, Transmitting };

struct ApRuntime {
  const Bss *bss;
  std::size_t first_sta; // global index of bss->stas[0]
  ApState state = ApState::Frozen;
  int counter = 0;
  Nanos resume = 0; // countdown starts here (end of DIFS)
  std::uint64_t generation = 0;
  std::size_t next_sta = 0;
  double primary_mw = 0; // currently sensed on the primary channel
  double interference_integral = 0; // mW * ns
  std::array<Nanos, kNumChannels> busy_ns{};
};

struct StaAccum {
  double delivered_mbit = 0;
  double signal_mw = 0;
  double interference_mw = 0;
  std::uint64_t receptions = 0;
};

struct Event {
  Nanos time;
  int phase; // 0: TXOP end, 1: backoff expiry
  std::size_t rank;
  std::size_t ap;
  std::uint64_t generation;
  bool operator>(const Event &o) const {
    if (time != o.time) return time > o.time;
    if (phase != o.phase) return phase > o.phase;
    return rank > o.rank;
  }
};

class Simulator {
public:
  Simulator(const Deployment &d, const SimConfig &cfg)
      : d_(d), cfg_(cfg), rng_(derive_seed(cfg.seed, fnv1a(d.id()))), slot_(to_ns(cfg.slot_us)),
        difs_(to_ns(cfg.difs_us)), txop_(to_ns(cfg.txop_ms * 1000.0)), end_(to_ns(cfg.duration_s * 1e6)),
        noise_mw_(dbm_to_mw(cfg.rf.noise_floor_dbm)) {
    std::size_t sta = 0;
    for (const auto &b : d.bsss) {
      aps_.push_back(ApRuntime{&b, sta});
      for (const auto &s : b.stas) stas_.push_back(&s);
      sta += b.stas.size();
    }
    const std::size_t n = aps_.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return aps_[a].bss->ap.code < aps_[b].bss->ap.code; });
    rank_.resize(n);
    for (std::size_t r = 0; r < n; ++r) rank_[order[r]] = r;

    // Width-1 received powers in mW; a transmission over w channels delivers gain / w per channel.
    ap_gain_.assign(n, std::vector<double>(n, 0.0));
    sta_gain_.assign(n, std::vector<double>(stas_.size(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      const Node &rx = aps_[i].bss->ap;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const Node &tx = aps_[j].bss->ap;
        ap_gain_[i][j] = dbm_to_mw(rssi(cfg.rf, tx.tx_power_dbm, 1, distance(rx.position, tx.position)) -
                                   link_shadowing_db(cfg.rf, rx.code, tx.code));
      }
      cca_mw_.push_back(dbm_to_mw(rx.cca_dbm));
    }
    for (std::size_t k = 0; k < n; ++k) {
      const Node &tx = aps_[k].bss->ap;
      for (std::size_t s = 0; s < stas_.size(); ++s)
        sta_gain_[k][s] = dbm_to_mw(rssi(cfg.rf, tx.tx_power_dbm, 1, distance(tx.position, stas_[s]->position)) -
                                    link_shadowing_db(cfg.rf, tx.code, stas_[s]->code));
    }
    accum_.resize(stas_.size());
  }

  SimResult run() {
    for (auto &ap : aps_) ap.counter = draw_backoff();
    reevaluate(0);
    Nanos last = 0;
    while (!queue_.empty() && queue_.top().time < end_) {
      const Nanos now = queue_.top().time;
      integrate(last, now);
      last = now;

      std::vector<std::size_t> ending, expiring;
      while (!queue_.empty() && queue_.top().time == now) {
        const Event e = queue_.top();
        queue_.pop();
        if (e.generation != aps_[e.ap].generation) continue;
        (e.phase == 0 ? ending : expiring).push_back(e.ap);
      }
      for (std::size_t ap : ending) finish(ap);

      // Every AP whose backoff expires in this slot decides on the medium as it
      // was before any of them starts; simultaneous starts are collisions.
      std::vector<std::pair<std::size_t, BondSet>> starters;
      for (std::size_t ap : expiring) {
        const Node &node = aps_[ap].bss->ap;
        FreeMask free;
        for (int c = node.range.min().index(); c <= node.range.max().index(); ++c)
          free.set(c, sensed_mw(ap, c) < cca_mw_[ap]);
        auto bond = select(cfg_.policy, node.primary, node.range, free, rng_);
        if (!bond) {
          ++stats_.empty_selections;
          aps_[ap].counter = draw_backoff();
          contend(ap, now);
          continue;
        }
        starters.emplace_back(ap, *bond);
      }
      if (starters.size() > 1) stats_.simultaneous_starts += starters.size();
      start_all(starters, now);
      reevaluate(now);
    }
    integrate(last, end_);
    // TXOPs still on air at the end count for airtime but deliver nothing.
    for (const auto &tx : active_)
      for (int c : tx.bond.channels()) aps_[tx.ap].busy_ns[static_cast<std::size_t>(c)] += end_ - tx.start;
    return collect();
  }

private:
  int draw_backoff() { return static_cast<int>(rng_.uniform_int(0, cfg_.cw_slots - 1)); }

  double sensed_mw(std::size_t ap, int channel) const {
    double p = 0;
    for (const auto &tx : active_)
      if (tx.ap != ap && tx.bond.contains(ChannelId(channel))) p += ap_gain_[ap][tx.ap] / tx.bond.width();
    return p;
  }

  double interference_at_receiver(const Transmission &tx) const {
    double worst = 0;
    for (int c : tx.bond.channels()) {
      double p = 0;
      for (const auto &o : active_)
        if (o.ap != tx.ap && o.bond.contains(ChannelId(c))) p += sta_gain_[o.ap][tx.sta] / o.bond.width();
      worst = std::max(worst, p);
    }
    return worst;
  }

  double sinr_db(double signal_mw, double interference_mw) const {
    return 10.0 * std::log10(signal_mw / (interference_mw + noise_mw_));
  }

  void schedule(std::size_t ap, Nanos time, int phase) {
    queue_.push(Event{time, phase, rank_[ap], ap, aps_[ap].generation});
  }

  void contend(std::size_t ap, Nanos now) {
    auto &rt = aps_[ap];
    rt.state = ApState::Contending;
    rt.resume = now + difs_;
    ++rt.generation;
    schedule(ap, rt.resume + rt.counter * slot_, 1);
  }

  void integrate(Nanos from, Nanos to) {
    if (to <= from) return;
    for (auto &ap : aps_) ap.interference_integral += ap.primary_mw * static_cast<double>(to - from);
  }

  void finish(std::size_t ap) {
    auto it = std::find_if(active_.begin(), active_.end(), [&](const auto &t) { return t.ap == ap; });
    const Transmission tx = *it;
    active_.erase(it);
    auto &acc = accum_[tx.sta];
    if (!tx.lost) acc.delivered_mbit += tx.rate_mbps * static_cast<double>(tx.end - tx.start) * 1e-9;
    acc.signal_mw += tx.signal_mw;
    acc.interference_mw += tx.worst_interference_mw;
    ++acc.receptions;
    auto &rt = aps_[ap];
    for (int c : tx.bond.channels()) rt.busy_ns[static_cast<std::size_t>(c)] += tx.end - tx.start;
    rt.state = ApState::Frozen;
    rt.counter = draw_backoff();
    ++rt.generation;
  }

  void start_all(const std::vector<std::pair<std::size_t, BondSet>> &starters, Nanos now) {
    if (starters.empty()) return;
    // Carrier-sense audit: a new TXOP may only overlap earlier ones its AP could not hear.
    for (const auto &[ap, bond] : starters)
      for (int c : bond.channels())
        if (sensed_mw(ap, c) >= cca_mw_[ap]) ++stats_.sensing_violations;

    const std::size_t first_new = active_.size();
    for (const auto &[ap, bond] : starters) {
      auto &rt = aps_[ap];
      const std::size_t sta = rt.first_sta + rt.next_sta;
      rt.next_sta = (rt.next_sta + 1) % rt.bss->stas.size();
      rt.state = ApState::Transmitting;
      ++rt.generation;
      Transmission tx{ap, sta, bond, now, now + txop_, sta_gain_[ap][sta] / bond.width(), 0, 0, 0};
      active_.push_back(tx);
      schedule(ap, tx.end, 0);
      ++stats_.txops;
    }
    for (std::size_t i = first_new; i < active_.size(); ++i) {
      auto &tx = active_[i];
      tx.worst_interference_mw = interference_at_receiver(tx);
      const double s = sinr_db(tx.signal_mw, tx.worst_interference_mw);
      auto mcs = select_mcs(cfg_.rf, s);
      tx.mcs_threshold_db = mcs ? cfg_.rf.mcs_table[*mcs].min_sinr_db : kNoPower;
      tx.rate_mbps = mcs ? tx.bond.width() * cfg_.rf.mcs_table[*mcs].rate_mbps : 0.0;
    }
    for (std::size_t i = 0; i < first_new; ++i) {
      auto &tx = active_[i];
      const bool hit = std::any_of(active_.begin() + static_cast<std::ptrdiff_t>(first_new), active_.end(),
                                   [&](const auto &n) { return n.bond.overlaps(tx.bond); });
      if (!hit) continue;
      tx.worst_interference_mw = std::max(tx.worst_interference_mw, interference_at_receiver(tx));
      if (!tx.lost && sinr_db(tx.signal_mw, tx.worst_interference_mw) < tx.mcs_threshold_db) {
        tx.lost = true;
        ++stats_.lost_txops;
      }
    }
  }

  // Update carrier sense after the medium changed at `now`.
  void reevaluate(Nanos now) {
    for (std::size_t i = 0; i < aps_.size(); ++i) {
      auto &rt = aps_[i];
      rt.primary_mw = sensed_mw(i, rt.bss->ap.primary.index());
      if (rt.state == ApState::Transmitting) continue;
      const bool busy = rt.primary_mw >= cca_mw_[i];
      if (rt.state == ApState::Contending && busy) {
        if (now > rt.resume) rt.counter -= static_cast<int>((now - rt.resume) / slot_);
        rt.state = ApState::Frozen;
        ++rt.generation;
      } else if (rt.state == ApState::Frozen && !busy) {
        contend(i, now);
      }
    }
  }

  SimResult collect() const {
    SimResult r;
    r.deployment_id = d_.id();
    r.policy = cfg_.policy;
    r.stats = stats_;
    const double duration_s = static_cast<double>(end_) * 1e-9;
    for (const auto &rt : aps_) {
      ApResult ap;
      ap.code = rt.bss->ap.code;
      ap.bss_id = rt.bss->ap.bss_id;
      for (std::size_t c = 0; c < kNumChannels; ++c)
        ap.airtime[c] = std::min(1.0, static_cast<double>(rt.busy_ns[c]) / static_cast<double>(end_));
      ap.mean_interference_dbm = mw_to_dbm(rt.interference_integral / static_cast<double>(end_));
      for (std::size_t s = 0; s < rt.bss->stas.size(); ++s) {
        const auto &acc = accum_[rt.first_sta + s];
        StaResult sr;
        sr.code = rt.bss->stas[s].code;
        sr.bss_id = rt.bss->stas[s].bss_id;
        sr.throughput_mbps = acc.delivered_mbit / duration_s;
        if (acc.receptions > 0) {
          const double n = static_cast<double>(acc.receptions);
          const auto obs = LinkObservables::from(mw_to_dbm(acc.signal_mw / n), mw_to_dbm(acc.interference_mw / n),
                                                 cfg_.rf.noise_floor_dbm);
          sr.mean_rssi_dbm = obs.rssi_dbm;
          sr.mean_interference_dbm = obs.interference_dbm;
          sr.mean_sinr_db = obs.sinr_db;
        }
        ap.stas.push_back(std::move(sr));
      }
      double total = 0;
      for (const auto &s : ap.stas) total += s.throughput_mbps;
      ap.throughput_mbps = total;
      r.aps.push_back(std::move(ap));
    }
    return r;
  }

  const Deployment &d_;
  const SimConfig &cfg_;
  Rng rng_;
  Nanos slot_, difs_, txop_, end_;
  double noise_mw_;
  std::vector<ApRuntime> aps_;
  std::vector<const Node *> stas_;
  std::vector<std::size_t> rank_;
  std::vector<std::vector<double>> ap_gain_;
  std::vector<std::vector<double>> sta_gain_;
  std::vector<double> cca_mw_;
  std::vector<StaAccum> accum_;
  std::vector<Transmission> active_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  SimStats stats_;
};

const std::vector<std::string> kResultHeader = {
    "node_code",    "node_type",    "bss_id",       "throughput_mbps", "mean_rssi_dbm", "mean_sinr_db",
    "mean_interference_dbm", "airtime_ch0", "airtime_ch1", "airtime_ch2", "airtime_ch3", "airtime_ch4",
    "airtime_ch5",  "airtime_ch6",  "airtime_ch7"};

std::string opt(const std::optional<double> &v) { return v ? csv::format(*v) : std::string(); }

} // namespace

SimResult simulate(const Deployment &d, const SimConfig &cfg) {
  cfg.validate();
  d.validate();
  check_policy_compatibility(d, cfg.policy);
  for (const auto &b : d.bsss)
    if (b.stas.empty()) throw InvalidArgument("deployment " + d.id() + ": BSS " + b.ap.bss_id + " has no STAs");
  return Simulator(d, cfg).run();
}

std::vector<SimResult> batch_simulate(const std::vector<Deployment> &deployments, const SimConfig &cfg, int jobs) {
  std::vector<SimResult> out(deployments.size());
  const auto errors = parallel_for(deployments.size(), jobs, [&](std::size_t i) { out[i] = simulate(deployments[i], cfg); });

  std::string msg;
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) msg += "\n  [" + std::to_string(i) + "] " + errors[i];
  if (!msg.empty()) throw Error("batch simulation failed:" + msg);
  return out;
}

std::string to_csv(const SimResult &r) {
  std::string out = std::string("# ") + kResultMagic + "\n";
  out += "# deployment=" + r.deployment_id + ",policy=" + to_string(r.policy) + "\n";
  out += csv::join(kResultHeader) + "\n";
  for (const auto &ap : r.aps) {
    std::vector<std::string> f = {ap.code, "0", ap.bss_id, csv::format(ap.throughput_mbps), "", "",
                                  opt(ap.mean_interference_dbm)};
    for (double a : ap.airtime) f.push_back(csv::format(a));
    out += csv::join(f) + "\n";
    for (const auto &s : ap.stas) {
      std::vector<std::string> g = {s.code,           "1", s.bss_id, csv::format(s.throughput_mbps), opt(s.mean_rssi_dbm),
                                    opt(s.mean_sinr_db), opt(s.mean_interference_dbm)};
      g.resize(kResultHeader.size());
      out += csv::join(g) + "\n";
    }
  }
  return out;
}

SimResult result_from_csv(std::string_view text, const std::string &source) {
  const auto doc = csv::parse(text, source);
  doc.require_magic(kResultMagic);
  doc.require_header(kResultHeader);
  SimResult r;
  auto id = doc.meta("deployment");
  auto pol = doc.meta("policy");
  if (!id || !pol) throw ParseError(source + ": missing deployment/policy metadata comment");
  r.deployment_id = *id;
  r.policy = parse_policy(*pol);
  std::map<std::string, std::size_t> by_bss;
  for (std::size_t row = 0; row < doc.rows.size(); ++row) {
    const long long type = doc.integer(row, 1);
    if (type == 0) {
      ApResult ap;
      ap.code = doc.text(row, 0);
      ap.bss_id = doc.text(row, 2);
      if (by_bss.count(ap.bss_id)) doc.fail(row, 2, "second AP for BSS '" + ap.bss_id + "'");
      ap.throughput_mbps = doc.number(row, 3);
      ap.mean_interference_dbm = doc.optional_number(row, 6);
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        ap.airtime[c] = doc.number(row, 7 + c);
        if (ap.airtime[c] < 0 || ap.airtime[c] > 1) doc.fail(row, 7 + c, "airtime outside [0,1]");
      }
      by_bss[ap.bss_id] = r.aps.size();
      r.aps.push_back(std::move(ap));
    } else if (type == 1) {
      StaResult s;
      s.code = doc.text(row, 0);
      s.bss_id = doc.text(row, 2);
      s.throughput_mbps = doc.number(row, 3);
      if (s.throughput_mbps < 0) doc.fail(row, 3, "negative throughput");
      s.mean_rssi_dbm = doc.optional_number(row, 4);
      s.mean_sinr_db = doc.optional_number(row, 5);
      s.mean_interference_dbm = doc.optional_number(row, 6);
      for (std::size_t c = 7; c < kResultHeader.size(); ++c)
        if (!doc.text(row, c).empty()) doc.fail(row, c, "STA rows carry no airtime");
      auto it = by_bss.find(s.bss_id);
      if (it == by_bss.end()) doc.fail(row, 2, "STA references BSS '" + s.bss_id + "' with no preceding AP row");
      r.aps[it->second].stas.push_back(std::move(s));
    } else {
      doc.fail(row, 1, "node_type must be 0 (AP) or 1 (STA)");
    }
  }
  for (const auto &ap : r.aps) {
    double total = 0;
    for (const auto &s : ap.stas) total += s.throughput_mbps;
    if (total != ap.throughput_mbps)
      throw ParseError(source + ": AP " + ap.code + " throughput is not the sum of its STAs' throughput");
  }
  return r;
}

void write_results_csv(const SimResult &r, const std::filesystem::path &path) { csv::write_file(path, to_csv(r)); }

SimResult read_results_csv(const std::filesystem::path &path) { return result_from_csv(csv::read_file(path), path.string()); }

} // namespace cbnet
