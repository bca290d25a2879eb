#include "cbnet/deployment.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/error.hpp"
#include "cbnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace cbnet {

namespace {

const std::vector<std::string> kHeader = {"node_code", "node_type",       "bss_id",      "x",
                                          "y",         "z",               "primary_channel", "min_channel",
                                          "max_channel", "tx_power_dbm", "cca_dbm"};

double quantize(double v) { return std::round(v * 1e4) / 1e4; }

// Quantized coordinate clipped into [0, extent]; CSV files carry 4 decimals.
double place(double v, double extent) {
  return std::min(quantize(std::clamp(v, 0.0, extent)), std::floor(extent * 1e4) / 1e4);
}

// Candidate channel ranges, grouped by width class (160/80/40/20 MHz).
const std::vector<std::vector<std::pair<int, int>>> kRangeClasses = {
    {{0, 7}},
    {{0, 3}, {4, 7}},
    {{0, 1}, {2, 3}, {4, 5}, {6, 7}},
    {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}, {6, 6}, {7, 7}},
};

} // namespace

double distance(const Position &a, const Position &b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::size_t Deployment::sta_count() const {
  std::size_t n = 0;
  for (const auto &b : bsss) n += b.stas.size();
  return n;
}

void Deployment::validate() const {
  if (!(map_width > 0) || !(map_height > 0)) throw InvalidArgument("deployment " + id() + ": map size must be positive");
  std::set<std::string> codes;
  std::set<std::string> bss_ids;
  auto check_node = [&](const Node &n) {
    if (!codes.insert(n.code).second) throw InvalidArgument("duplicate node code '" + n.code + "'");
    if (!n.range.contains(n.primary)) throw InvalidArgument("node " + n.code + ": primary channel outside its range");
    const auto &p = n.position;
    if (p.x < 0 || p.x > map_width || p.y < 0 || p.y > map_height)
      throw InvalidArgument("node " + n.code + ": position outside the map");
  };
  for (const auto &b : bsss) {
    if (b.ap.kind != NodeKind::AP) throw InvalidArgument("node " + b.ap.code + " heads a BSS but is not an AP");
    if (!bss_ids.insert(b.ap.bss_id).second) throw InvalidArgument("two APs share BSS id '" + b.ap.bss_id + "'");
    check_node(b.ap);
    for (const auto &s : b.stas) {
      check_node(s);
      if (s.kind != NodeKind::STA) throw InvalidArgument("node " + s.code + " is listed as a STA but is an AP");
      if (s.bss_id != b.ap.bss_id) throw InvalidArgument("node " + s.code + ": bss_id differs from its AP's");
      if (s.primary != b.ap.primary || s.range != b.ap.range || s.tx_power_dbm != b.ap.tx_power_dbm ||
          s.cca_dbm != b.ap.cca_dbm)
        throw InvalidArgument("node " + s.code + ": channel/power settings differ from AP " + b.ap.code);
    }
  }
}

void ScenarioSpec::validate() const {
  if (!(map_width > 0) || !(map_height > 0)) throw ConfigError("scenario " + name + ": map size must be positive");
  if (ap_count < 1 || sta_min < 1 || sta_max < sta_min || deployment_count < 1)
    throw ConfigError("scenario " + name + ": counts must be >= 1 with sta_min <= sta_max");
  if (!(placement.sta_radius_m > 0)) throw ConfigError("scenario " + name + ": sta radius must be positive");
}

std::vector<ScenarioSpec> builtin_specs() {
  auto row = [](std::string name, double w, double h, int aps, int lo, int hi, int count) {
    ScenarioSpec s;
    s.name = std::move(name);
    s.map_width = w;
    s.map_height = h;
    s.ap_count = aps;
    s.sta_min = lo;
    s.sta_max = hi;
    s.deployment_count = count;
    return s;
  };
  return {
      row("training1a", 80, 60, 12, 10, 20, 100), row("training1b", 70, 50, 12, 10, 20, 100),
      row("training1c", 60, 40, 12, 10, 20, 100), row("training2a", 60, 40, 8, 5, 10, 100),
      row("training2b", 50, 30, 8, 5, 10, 100),   row("training2c", 40, 20, 8, 5, 10, 100),
      row("test1", 80, 60, 4, 2, 10, 50),          row("test2", 80, 60, 6, 2, 10, 50),
      row("test3", 80, 60, 8, 2, 10, 50),          row("test4", 80, 60, 10, 2, 10, 50),
  };
}

ScenarioSpec find_spec(const std::string &name) {
  std::string names;
  for (const auto &s : builtin_specs()) {
    if (s.name == name) return s;
    names += (names.empty() ? "" : ", ") + s.name;
  }
  throw ConfigError("unknown scenario spec '" + name + "'; valid names: " + names);
}

ScenarioSpec desk_scale(ScenarioSpec spec) {
  spec.sta_min = std::max(1, (spec.sta_min + 1) / 2);
  spec.sta_max = std::max(spec.sta_min, spec.sta_max / 2);
  return spec;
}

std::string bss_letter(int index) {
  std::string s;
  int n = index + 1;
  while (n > 0) {
    const int r = (n - 1) % 26;
    s.insert(s.begin(), static_cast<char>('A' + r));
    n = (n - 1) / 26;
  }
  return s;
}

Deployment generate(const ScenarioSpec &spec, int deployment_index, std::uint64_t seed) {
  spec.validate();
  if (deployment_index < 0 || deployment_index >= spec.deployment_count)
    throw InvalidArgument("deployment index " + std::to_string(deployment_index) + " outside [0," +
                          std::to_string(spec.deployment_count) + ")");
  Rng rng(derive_seed(seed ^ fnv1a(spec.name), static_cast<std::uint64_t>(deployment_index)));

  const int n = spec.ap_count;
  const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(n * spec.map_width / spec.map_height))));
  const int rows = (n + cols - 1) / cols;
  const double cell_w = spec.map_width / cols;
  const double cell_h = spec.map_height / rows;
  if (cell_w < 1.0 || cell_h < 1.0)
    throw Error("scenario " + spec.name + ": map too small to host " + std::to_string(n) + " AP grid cells");

  std::vector<int> cells(static_cast<std::size_t>(cols * rows));
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  rng.shuffle(cells);
  cells.resize(static_cast<std::size_t>(n));
  std::sort(cells.begin(), cells.end());

  const auto &pp = spec.placement;

  Deployment d;
  d.scenario_id = spec.name;
  d.index = deployment_index;
  d.map_width = spec.map_width;
  d.map_height = spec.map_height;
  for (int a = 0; a < n; ++a) {
    const int cx = cells[a] % cols, cy = cells[a] / cols;
    Bss bss;
    Node &ap = bss.ap;
    ap.kind = NodeKind::AP;
    ap.bss_id = bss_letter(a);
    ap.code = "AP_" + ap.bss_id;
    ap.position.x = place((cx + 0.5 + rng.uniform(-pp.ap_jitter, pp.ap_jitter)) * cell_w, spec.map_width);
    ap.position.y = place((cy + 0.5 + rng.uniform(-pp.ap_jitter, pp.ap_jitter)) * cell_h, spec.map_height);
    ap.position.z = pp.z_m;
    const auto &cls = kRangeClasses[rng.index(kRangeClasses.size())];
    const auto [lo, hi] = cls[rng.index(cls.size())];
    ap.range = ChannelRange(lo, hi);
    ap.primary = ChannelId(static_cast<int>(rng.uniform_int(lo, hi)));
    ap.tx_power_dbm = pp.tx_power_dbm;
    ap.cca_dbm = pp.cca_dbm;

    const int stas = static_cast<int>(rng.uniform_int(spec.sta_min, spec.sta_max));
    for (int s = 0; s < stas; ++s) {
      Node sta = ap;
      sta.kind = NodeKind::STA;
      sta.code = "STA_" + ap.bss_id + std::to_string(s + 1);
      const double r = pp.sta_radius_m * std::sqrt(rng.uniform());
      const double theta = 2.0 * M_PI * rng.uniform();
      sta.position.x = place(ap.position.x + r * std::cos(theta), spec.map_width);
      sta.position.y = place(ap.position.y + r * std::sin(theta), spec.map_height);
      bss.stas.push_back(std::move(sta));
    }
    d.bsss.push_back(std::move(bss));
  }
  return d;
}

std::string to_csv(const Deployment &d) {
  std::string out = std::string("# ") + kDeploymentMagic + "\n";
  out += "# scenario_id=" + d.scenario_id + ",index=" + std::to_string(d.index) +
         ",map_width=" + csv::format(d.map_width) + ",map_height=" + csv::format(d.map_height) + "\n";
  out += csv::join(kHeader) + "\n";
  auto emit = [&out](const Node &n) {
    out += csv::join({n.code, n.kind == NodeKind::AP ? "0" : "1", n.bss_id, csv::format_fixed(n.position.x, 4),
                      csv::format_fixed(n.position.y, 4), csv::format_fixed(n.position.z, 4),
                      std::to_string(n.primary.index()), std::to_string(n.range.min().index()),
                      std::to_string(n.range.max().index()), csv::format(n.tx_power_dbm), csv::format(n.cca_dbm)});
    out += '\n';
  };
  for (const auto &b : d.bsss) {
    emit(b.ap);
    for (const auto &s : b.stas) emit(s);
  }
  return out;
}

Deployment deployment_from_csv(std::string_view text, const std::string &source) {
  const csv::Document doc = csv::parse(text, source);
  doc.require_magic(kDeploymentMagic);
  doc.require_header(kHeader);

  Deployment d;
  auto meta = [&](const char *key) {
    auto v = doc.meta(key);
    if (!v) throw ParseError(source + ": missing '" + key + "' in the metadata comment");
    return *v;
  };
  d.scenario_id = meta("scenario_id");
  try {
    d.index = std::stoi(meta("index"));
    d.map_width = std::stod(meta("map_width"));
    d.map_height = std::stod(meta("map_height"));
  } catch (const std::logic_error &) {
    throw ParseError(source + ": malformed metadata comment");
  }

  std::map<std::string, std::size_t> bss_index;
  std::set<std::string> codes;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    Node n;
    n.code = doc.text(r, 0);
    if (n.code.empty()) doc.fail(r, 0, "empty node code");
    if (!codes.insert(n.code).second) doc.fail(r, 0, "duplicate node code '" + n.code + "'");
    const long long type = doc.integer(r, 1);
    if (type != 0 && type != 1) doc.fail(r, 1, "node_type must be 0 (AP) or 1 (STA)");
    n.kind = type == 0 ? NodeKind::AP : NodeKind::STA;
    n.bss_id = doc.text(r, 2);
    n.position = {doc.number(r, 3), doc.number(r, 4), doc.number(r, 5)};
    if (n.position.x < 0 || n.position.x > d.map_width) doc.fail(r, 3, "x outside the map");
    if (n.position.y < 0 || n.position.y > d.map_height) doc.fail(r, 4, "y outside the map");
    auto channel = [&](std::size_t col) {
      const long long c = doc.integer(r, col);
      if (c < 0 || c >= kNumChannels) doc.fail(r, col, "channel must be in [0,7]");
      return static_cast<int>(c);
    };
    const int primary = channel(6), lo = channel(7), hi = channel(8);
    if (lo > hi) doc.fail(r, 7, "min_channel exceeds max_channel");
    if (primary < lo || primary > hi) doc.fail(r, 6, "primary channel outside [min_channel, max_channel]");
    n.primary = ChannelId(primary);
    n.range = ChannelRange(lo, hi);
    n.tx_power_dbm = doc.number(r, 9);
    n.cca_dbm = doc.number(r, 10);

    if (n.kind == NodeKind::AP) {
      if (bss_index.count(n.bss_id)) doc.fail(r, 2, "second AP for BSS '" + n.bss_id + "'");
      bss_index[n.bss_id] = d.bsss.size();
      d.bsss.push_back(Bss{n, {}});
      continue;
    }
    auto it = bss_index.find(n.bss_id);
    if (it == bss_index.end()) doc.fail(r, 2, "STA references BSS '" + n.bss_id + "' with no AP (APs must precede their STAs)");
    const Node &ap = d.bsss[it->second].ap;
    if (n.primary != ap.primary) doc.fail(r, 6, "differs from AP " + ap.code);
    if (n.range != ap.range) doc.fail(r, 7, "channel range differs from AP " + ap.code);
    if (n.tx_power_dbm != ap.tx_power_dbm) doc.fail(r, 9, "differs from AP " + ap.code);
    if (n.cca_dbm != ap.cca_dbm) doc.fail(r, 10, "differs from AP " + ap.code);
    d.bsss[it->second].stas.push_back(std::move(n));
  }
  return d;
}

void write_csv(const Deployment &d, const std::filesystem::path &path) {
  d.validate();
  csv::write_file(path, to_csv(d));
}

Deployment read_deployment_csv(const std::filesystem::path &path) {
  return deployment_from_csv(csv::read_file(path), path.string());
}

} // namespace cbnet
