#include "cbnet/features.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/error.hpp"
#include "cbnet/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cbnet {

namespace {

const char *kGroups[] = {"primary", "min", "max"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double plus_noise(std::optional<double> interference_dbm, double noise_dbm) {
  return mw_to_dbm(dbm_to_mw(interference_dbm.value_or(kNoPower)) + dbm_to_mw(noise_dbm));
}

void one_hot(std::vector<double> &out, int index) {
  for (int k = 0; k < kNumChannels; ++k) out.push_back(k == index ? 1.0 : 0.0);
}

void channel_one_hots(std::vector<double> &out, const Node &ap) {
  one_hot(out, ap.primary.index());
  one_hot(out, ap.range.min().index());
  one_hot(out, ap.range.max().index());
}

double range_airtime_mean(const Node &ap, const ApResult &res) {
  double s = 0;
  for (int c = ap.range.min().index(); c <= ap.range.max().index(); ++c) s += res.airtime[c];
  return s / ap.range.width();
}

const ApResult &match_ap(const SimResult &r, const Deployment &d, std::size_t k) {
  const Node &ap = d.bsss[k].ap;
  if (r.aps.size() != d.bsss.size() || r.aps[k].code != ap.code || r.aps[k].stas.size() != d.bsss[k].stas.size())
    throw InvalidArgument("results for " + r.deployment_id + " do not match deployment " + d.id() + " at " + ap.code);
  for (std::size_t s = 0; s < d.bsss[k].stas.size(); ++s)
    if (r.aps[k].stas[s].code != d.bsss[k].stas[s].code)
      throw InvalidArgument("results for " + r.deployment_id + " do not match deployment " + d.id() + " at " +
                            d.bsss[k].stas[s].code);
  return r.aps[k];
}

struct StaObs {
  double rssi;
  double sinr;
  double interference; // plus noise
};

StaObs sta_observables(const Node &ap, const ApResult &ares, const Node &sta, const StaResult &sres,
                       const ExtractOptions &opt) {
  const double noise = opt.rf.noise_floor_dbm;
  if (sres.mean_rssi_dbm && sres.mean_sinr_db)
    return {*sres.mean_rssi_dbm, *sres.mean_sinr_db, plus_noise(sres.mean_interference_dbm, noise)};
  if (!opt.impute_missing) throw InvalidArgument("no link observables for " + sta.code + " (it received nothing)");
  const int width = enumerate_valid_bonds(ap.primary, ap.range).back().width();
  const double rx = rssi(opt.rf, ap.tx_power_dbm, width, distance(ap.position, sta.position)) -
                    link_shadowing_db(opt.rf, ap.code, sta.code);
  const auto obs = LinkObservables::from(rx, ares.mean_interference_dbm.value_or(kNoPower), noise);
  return {obs.rssi_dbm, obs.sinr_db, plus_noise(ares.mean_interference_dbm, noise)};
}

FeatureSchema sta_schema() {
  std::vector<std::string> names = {"x", "y", "distance"};
  for (auto g : kGroups)
    for (int k = 0; k < kNumChannels; ++k) names.push_back(std::string(g) + "#" + std::to_string(k));
  for (auto n : {"rssi", "sinr", "ap_airtime_mean", "ap_interference"}) names.push_back(n);
  for (int k = 0; k < kNumChannels; ++k) names.push_back("ap_airtime_ch" + std::to_string(k));
  return FeatureSchema::from_names(Granularity::STA, names);
}

bool ap_level(const FeatureColumn &c) { return c.one_hot() || c.name.rfind("ap_", 0) == 0; }

double mean_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population variance, two-pass.
double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

} // namespace

std::string to_string(Granularity g) { return g == Granularity::STA ? "sta" : "bss"; }

Granularity parse_granularity(std::string_view text) {
  const auto t = lower(text);
  if (t == "sta") return Granularity::STA;
  if (t == "bss") return Granularity::BSS;
  throw ConfigError("unknown granularity '" + std::string(text) + "' (expected sta or bss)");
}

SplitLevel parse_split_level(std::string_view text) {
  const auto t = lower(text);
  if (t == "deployment") return SplitLevel::Deployment;
  if (t == "row") return SplitLevel::Row;
  throw ConfigError("unknown split level '" + std::string(text) + "' (expected deployment or row)");
}

// ---- schema -------------------------------------------------------------

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  return std::nullopt;
}

std::size_t FeatureSchema::index(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw InvalidArgument("no feature column '" + std::string(name) + "'");
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  for (const auto &c : columns) out.push_back(c.name);
  return out;
}

void FeatureSchema::validate() const {
  std::set<std::string> seen, closed;
  std::string open;
  for (const auto &c : columns) {
    if (c.name.empty()) throw InvalidArgument("empty feature name");
    if (!seen.insert(c.name).second) throw InvalidArgument("duplicate feature '" + c.name + "'");
    if (c.group != open) {
      if (!open.empty()) closed.insert(open);
      if (!c.group.empty() && closed.count(c.group))
        throw InvalidArgument("one-hot group '" + c.group + "' is not contiguous");
      open = c.group;
    }
  }
}

FeatureSchema FeatureSchema::from_names(Granularity g, const std::vector<std::string> &names) {
  FeatureSchema s;
  s.granularity = g;
  for (const auto &n : names) {
    const auto hash = n.find('#');
    s.columns.push_back({n, hash == std::string::npos ? std::string() : n.substr(0, hash)});
  }
  s.validate();
  return s;
}

// ---- table --------------------------------------------------------------

std::vector<double> FeatureTable::column(std::size_t j) const {
  std::vector<double> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) out[i] = at(i, j);
  return out;
}

void FeatureTable::add_row(std::string dep, std::string bss_id, std::string ent, std::span<const double> x,
                           std::optional<double> label) {
  if (x.size() != width())
    throw InvalidArgument("row for " + ent + " has " + std::to_string(x.size()) + " values, schema has " +
                          std::to_string(width()));
  if (label.has_value() != (rows() == 0 ? label.has_value() : labelled()))
    throw InvalidArgument("labelled and unlabelled rows mixed in one table");
  deployment.push_back(std::move(dep));
  bss.push_back(std::move(bss_id));
  entity.push_back(std::move(ent));
  values.insert(values.end(), x.begin(), x.end());
  if (label) labels.push_back(*label);
}

FeatureTable FeatureTable::select_rows(const std::vector<std::size_t> &indices) const {
  FeatureTable out;
  out.schema = schema;
  for (auto i : indices) {
    if (i >= rows()) throw InvalidArgument("row index out of range");
    out.deployment.push_back(deployment[i]);
    out.bss.push_back(bss[i]);
    out.entity.push_back(entity[i]);
    const auto r = row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    if (labelled()) out.labels.push_back(labels[i]);
  }
  return out;
}

FeatureTable FeatureTable::select_columns(const std::vector<std::string> &names) const {
  std::vector<std::size_t> idx;
  FeatureTable out;
  out.schema.granularity = schema.granularity;
  for (const auto &n : names) {
    idx.push_back(schema.index(n));
    out.schema.columns.push_back(schema.columns[idx.back()]);
  }
  out.schema.validate();
  out.deployment = deployment;
  out.bss = bss;
  out.entity = entity;
  out.labels = labels;
  out.values.reserve(rows() * idx.size());
  for (std::size_t i = 0; i < rows(); ++i)
    for (auto j : idx) out.values.push_back(at(i, j));
  return out;
}

FeatureTable FeatureTable::filter_deployments(const std::vector<std::string> &ids) const {
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows(); ++i)
    if (keep.count(deployment[i])) idx.push_back(i);
  return select_rows(idx);
}

FeatureTable FeatureTable::concat(const std::vector<FeatureTable> &parts) {
  FeatureTable out;
  if (parts.empty()) return out;
  out.schema = parts.front().schema;
  for (const auto &p : parts) {
    if (!(p.schema == out.schema)) throw InvalidArgument("cannot concatenate tables with different schemas");
    if (p.rows() == 0) continue;
    if (out.rows() > 0 && p.labelled() != out.labelled())
      throw InvalidArgument("cannot concatenate labelled and unlabelled tables");
    out.deployment.insert(out.deployment.end(), p.deployment.begin(), p.deployment.end());
    out.bss.insert(out.bss.end(), p.bss.begin(), p.bss.end());
    out.entity.insert(out.entity.end(), p.entity.begin(), p.entity.end());
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

void FeatureTable::validate() const {
  schema.validate();
  const std::size_t n = rows();
  if (deployment.size() != n || bss.size() != n || values.size() != n * width() || (labelled() && labels.size() != n))
    throw InvalidArgument("feature table columns have inconsistent lengths");
}

// ---- extraction ---------------------------------------------------------

FeatureTable extract_sta(const Deployment &d, const SimResult &r, const ExtractOptions &opt) {
  FeatureTable t;
  t.schema = sta_schema();
  std::vector<double> x;
  for (std::size_t k = 0; k < d.bsss.size(); ++k) {
    const Bss &b = d.bsss[k];
    const ApResult &ares = match_ap(r, d, k);
    const double airtime_mean = range_airtime_mean(b.ap, ares);
    const double ap_interf = plus_noise(ares.mean_interference_dbm, opt.rf.noise_floor_dbm);
    for (std::size_t s = 0; s < b.stas.size(); ++s) {
      const Node &sta = b.stas[s];
      const auto obs = sta_observables(b.ap, ares, sta, ares.stas[s], opt);
      x.clear();
      x.push_back(sta.position.x);
      x.push_back(sta.position.y);
      x.push_back(distance(sta.position, b.ap.position));
      channel_one_hots(x, b.ap);
      x.push_back(obs.rssi);
      x.push_back(obs.sinr);
      x.push_back(airtime_mean);
      x.push_back(ap_interf);
      for (double a : ares.airtime) x.push_back(a);
      std::optional<double> label;
      if (opt.labels) label = ares.stas[s].throughput_mbps;
      t.add_row(d.id(), b.ap.bss_id, sta.code, x, label);
    }
  }
  return t;
}

FeatureTable aggregate_bss(const FeatureTable &sta) {
  if (sta.schema.granularity != Granularity::STA) throw InvalidArgument("aggregate_bss needs an STA-granularity table");
  FeatureTable out;
  out.schema.granularity = Granularity::BSS;
  std::vector<std::string> names;
  for (const auto &c : sta.schema.columns) {
    if (ap_level(c)) {
      names.push_back(c.name);
    } else {
      names.push_back(c.name + "_mean");
      names.push_back(c.name + "_std");
    }
  }
  out.schema = FeatureSchema::from_names(Granularity::BSS, names);

  // Groups in first-appearance order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < sta.rows(); ++i) {
    auto key = std::make_pair(sta.deployment[i], sta.bss[i]);
    auto &m = members[key];
    if (m.empty()) order.push_back(key);
    m.push_back(i);
  }
  std::vector<double> x, col;
  for (const auto &key : order) {
    const auto &m = members[key];
    if (m.empty()) throw InvalidArgument("BSS " + key.second + " in " + key.first + " has no STAs");
    x.clear();
    for (std::size_t j = 0; j < sta.width(); ++j) {
      if (ap_level(sta.schema.columns[j])) {
        x.push_back(sta.at(m.front(), j));
        continue;
      }
      col.clear();
      for (auto i : m) col.push_back(sta.at(i, j));
      x.push_back(mean_of(col));
      x.push_back(std::sqrt(variance_of(col)));
    }
    std::optional<double> label;
    if (sta.labelled()) {
      double s = 0;
      for (auto i : m) s += sta.labels[i];
      label = s;
    }
    out.add_row(key.first, key.second, key.second, x, label);
  }
  return out;
}

// ---- Yeo-Johnson --------------------------------------------------------

double yeo_johnson(double x, double lambda) {
  constexpr double eps = 1e-12;
  if (x >= 0) {
    const double l = std::log1p(x);
    return std::abs(lambda) < eps ? l : std::expm1(lambda * l) / lambda;
  }
  const double l = std::log1p(-x);
  const double p = 2.0 - lambda;
  return std::abs(p) < eps ? -l : -std::expm1(p * l) / p;
}

double fit_yeo_johnson_lambda(std::span<const double> column) {
  if (column.size() < 2 || std::all_of(column.begin(), column.end(), [&](double v) { return v == column[0]; }))
    throw InvalidArgument("Yeo-Johnson fit needs at least two distinct values");
  const double n = static_cast<double>(column.size());
  double jacobian = 0;
  for (double x : column) jacobian += std::copysign(std::log1p(std::abs(x)), x);
  std::vector<double> t(column.size());
  auto loglik = [&](double lambda) {
    for (std::size_t i = 0; i < column.size(); ++i) t[i] = yeo_johnson(column[i], lambda);
    const double var = variance_of(t);
    if (!(var > 0)) return -std::numeric_limits<double>::infinity();
    return -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
  };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = -2.0, b = 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = loglik(c), fd = loglik(d);
  while (b - a > 1e-4) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = loglik(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = loglik(d);
    }
  }
  return 0.5 * (a + b);
}

// ---- preprocessor -------------------------------------------------------

void Preprocessor::fit(const FeatureTable &t, bool yeo_johnson_enabled) {
  if (t.rows() < 1) throw InvalidArgument("cannot fit a preprocessor on an empty table");
  Preprocessor p;
  p.names_ = t.schema.names();
  const std::size_t w = t.width();
  p.scaled_.assign(w, 0);
  p.lambda_.assign(w, std::nullopt);
  p.mean_.assign(w, 0.0);
  p.scale_.assign(w, 1.0);
  for (std::size_t j = 0; j < w; ++j) {
    if (t.schema.columns[j].one_hot()) continue;
    p.scaled_[j] = 1;
    auto col = t.column(j);
    const bool constant = std::all_of(col.begin(), col.end(), [&](double v) { return v == col[0]; });
    if (yeo_johnson_enabled && !constant) {
      p.lambda_[j] = fit_yeo_johnson_lambda(col);
      for (auto &v : col) v = yeo_johnson(v, *p.lambda_[j]);
    }
    p.mean_[j] = mean_of(col);
    const double sd = std::sqrt(variance_of(col));
    p.scale_[j] = sd > 0 ? sd : 1.0;
  }
  p.fitted_ = true;
  *this = std::move(p);
}

void Preprocessor::transform_row(std::span<double> x) const {
  if (!fitted_) throw InvalidArgument("preprocessor used before fit");
  if (x.size() != names_.size()) throw InvalidArgument("row width does not match the fitted preprocessor");
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!scaled_[j]) continue;
    double v = x[j];
    if (lambda_[j]) v = yeo_johnson(v, *lambda_[j]);
    x[j] = (v - mean_[j]) / scale_[j];
  }
}

FeatureTable Preprocessor::transform(const FeatureTable &t) const {
  if (!fitted_) throw InvalidArgument("preprocessor used before fit");
  if (t.schema.names() != names_) throw InvalidArgument("feature columns do not match the fitted preprocessor");
  FeatureTable out = t;
  for (std::size_t i = 0; i < out.rows(); ++i) transform_row(out.row(i));
  return out;
}

std::string Preprocessor::serialize() const {
  if (!fitted_) throw InvalidArgument("preprocessor used before fit");
  std::ostringstream os;
  os << "cbnet-preprocessor v1\n" << names_.size() << "\n";
  for (std::size_t j = 0; j < names_.size(); ++j)
    os << names_[j] << ' ' << int(scaled_[j]) << ' ' << (lambda_[j] ? csv::format(*lambda_[j]) : "-") << ' '
       << csv::format(mean_[j]) << ' ' << csv::format(scale_[j]) << "\n";
  return os.str();
}

Preprocessor Preprocessor::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string magic, version;
  std::size_t n = 0;
  if (!(is >> magic >> version) || magic + " " + version != "cbnet-preprocessor v1")
    throw ParseError("not a cbnet-preprocessor v1 block");
  if (!(is >> n)) throw ParseError("preprocessor: missing column count");
  Preprocessor p;
  for (std::size_t j = 0; j < n; ++j) {
    std::string name, lam, mean, scale;
    int scaled = 0;
    if (!(is >> name >> scaled >> lam >> mean >> scale)) throw ParseError("preprocessor: truncated column " + std::to_string(j));
    p.names_.push_back(name);
    p.scaled_.push_back(static_cast<char>(scaled != 0));
    p.lambda_.push_back(lam == "-" ? std::nullopt : std::optional<double>(std::stod(lam)));
    p.mean_.push_back(std::stod(mean));
    p.scale_.push_back(std::stod(scale));
  }
  p.fitted_ = true;
  return p;
}

// ---- analysis -----------------------------------------------------------

CorrelationMatrix correlation_matrix(const FeatureTable &t, bool include_label) {
  if (t.rows() < 2) throw InvalidArgument("correlation needs at least two rows");
  CorrelationMatrix m;
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < t.width(); ++j) {
    m.names.push_back(t.schema.columns[j].name);
    cols.push_back(t.column(j));
  }
  if (include_label && t.labelled()) {
    m.names.push_back("throughput");
    cols.push_back(t.labels);
  }
  const std::size_t n = cols.size();
  std::vector<char> constant(n);
  for (std::size_t j = 0; j < n; ++j) {
    constant[j] = variance_of(cols[j]) == 0.0;
    if (constant[j]) m.warnings.push_back("column '" + m.names[j] + "' has zero variance; correlations set to 0");
  }
  m.r.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    m.r[a][a] = 1.0;
    for (std::size_t b = a + 1; b < n; ++b) {
      const double v = constant[a] || constant[b] ? 0.0 : pearson(cols[a], cols[b]);
      m.r[a][b] = m.r[b][a] = v;
    }
  }
  return m;
}

std::string to_csv(const CorrelationMatrix &m) {
  std::string out = "feature";
  for (const auto &n : m.names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    out += m.names[i];
    for (double v : m.r[i]) out += "," + csv::format(v);
    out += "\n";
  }
  return out;
}

std::vector<FeatureStat> feature_report(const FeatureTable &t, double variance_threshold) {
  std::vector<FeatureStat> out;
  const double n = static_cast<double>(t.rows());
  const bool label_varies = t.labelled() && t.rows() > 2 && variance_of(t.labels) > 0;
  for (std::size_t j = 0; j < t.width(); ++j) {
    FeatureStat s;
    s.name = t.schema.columns[j].name;
    const auto col = t.column(j);
    s.variance = col.empty() ? 0.0 : variance_of(col);
    s.low_variance = s.variance <= variance_threshold;
    if (label_varies && s.variance > 0) {
      const double r = pearson(col, t.labels);
      s.label_correlation = r;
      if (std::abs(r) >= 1.0) {
        s.p_value = 0.0;
      } else {
        const double tstat = r * std::sqrt((n - 2) / (1 - r * r));
        boost::math::students_t dist(n - 2);
        s.p_value = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(tstat)));
      }
    }
    out.push_back(s);
  }
  return out;
}

std::string to_csv(const std::vector<FeatureStat> &report) {
  std::string out = "feature,variance,low_variance,label_correlation,p_value\n";
  auto opt = [](const std::optional<double> &v) { return v ? csv::format(*v) : std::string(); };
  for (const auto &s : report)
    out += s.name + "," + csv::format(s.variance) + "," + (s.low_variance ? "1" : "0") + "," +
           opt(s.label_correlation) + "," + opt(s.p_value) + "\n";
  return out;
}

// ---- split --------------------------------------------------------------

std::pair<std::vector<std::string>, std::vector<std::string>>
split_deployments(const std::vector<std::string> &deployment_ids, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("split fraction must be in [0, 1]");
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto &d : deployment_ids)
    if (seen.insert(d).second) ids.push_back(d);
  Rng rng(seed);
  rng.shuffle(ids);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::string> val(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return {train, val};
}

std::pair<FeatureTable, FeatureTable> split(const FeatureTable &t, double fraction, std::uint64_t seed,
                                            SplitLevel level) {
  if (level == SplitLevel::Deployment) {
    auto [train, val] = split_deployments(t.deployment, fraction, seed);
    return {t.filter_deployments(train), t.filter_deployments(val)};
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("split fraction must be in [0, 1]");
  std::vector<std::size_t> idx(t.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
  std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {t.select_rows(a), t.select_rows(b)};
}

// ---- table CSV ----------------------------------------------------------

std::string to_csv(const FeatureTable &t) {
  t.validate();
  std::string out = std::string("# ") + kFeaturesMagic + "\n# granularity=" + to_string(t.schema.granularity) + "\n";
  out += "deployment,bss_id,entity";
  for (const auto &c : t.schema.columns) out += "," + c.name;
  out += ",label\n";
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out += t.deployment[i] + "," + t.bss[i] + "," + t.entity[i];
    for (double v : t.row(i)) out += "," + csv::format(v);
    out += ",";
    if (t.labelled()) out += csv::format(t.labels[i]);
    out += "\n";
  }
  return out;
}

FeatureTable features_from_csv(std::string_view text, const std::string &source) {
  const auto doc = csv::parse(text, source);
  doc.require_magic(kFeaturesMagic);
  const auto g = doc.meta("granularity");
  if (!g) throw ParseError(source + ": missing granularity metadata line");
  if (doc.header.size() < 4 || doc.header[0] != "deployment" || doc.header[1] != "bss_id" ||
      doc.header[2] != "entity" || doc.header.back() != "label")
    throw ParseError(source + ": header must be deployment,bss_id,entity,<features...>,label");
  std::vector<std::string> names(doc.header.begin() + 3, doc.header.end() - 1);
  FeatureTable t;
  try {
    t.schema = FeatureSchema::from_names(parse_granularity(*g), names);
  } catch (const Error &e) {
    throw ParseError(source + ": " + e.what());
  }
  const std::size_t label_col = doc.header.size() - 1;
  std::vector<double> x(names.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      x[j] = doc.number(r, j + 3);
      if (!std::isfinite(x[j])) doc.fail(r, j + 3, "non-finite feature value");
    }
    const auto label = doc.optional_number(r, label_col);
    if (r > 0 && label.has_value() != t.labelled()) doc.fail(r, label_col, "labelled and unlabelled rows mixed");
    for (std::size_t c = 0; c < 3; ++c)
      if (doc.text(r, c).empty()) doc.fail(r, c, "empty identifier");
    t.add_row(doc.text(r, 0), doc.text(r, 1), doc.text(r, 2), x, label);
  }
  return t;
}

void write_features_csv(const FeatureTable &t, const std::filesystem::path &path) { csv::write_file(path, to_csv(t)); }

FeatureTable read_features_csv(const std::filesystem::path &path) {
  return features_from_csv(csv::read_file(path), path.string());
}

// ---- graphs -------------------------------------------------------------

void GraphSample::validate() const {
  for (const auto &n : nodes)
    if (n.features.size() != kGraphNodeWidth) throw InvalidArgument("graph node " + n.code + " has the wrong width");
  for (const auto &e : edges) {
    if (e.src >= nodes.size() || e.dst >= nodes.size()) throw InvalidArgument("graph edge endpoint out of range");
    if (e.features.size() != kGraphEdgeWidth) throw InvalidArgument("graph edge has the wrong width");
  }
}

GraphSample build_graph(const Deployment &d, const SimResult &r, const ExtractOptions &opt) {
  GraphSample g;
  g.deployment_id = d.id();
  const double noise = opt.rf.noise_floor_dbm;
  std::vector<std::size_t> ap_index;
  std::vector<double> f;
  for (std::size_t k = 0; k < d.bsss.size(); ++k) {
    const Bss &b = d.bsss[k];
    const ApResult &ares = match_ap(r, d, k);
    f = {0.0, b.ap.position.x, b.ap.position.y};
    channel_one_hots(f, b.ap);
    f.push_back(0.0);
    f.push_back(range_airtime_mean(b.ap, ares));
    ap_index.push_back(g.nodes.size());
    std::optional<double> ap_label;
    if (opt.labels) ap_label = ares.throughput_mbps;
    g.nodes.push_back({NodeKind::AP, b.ap.code, b.ap.bss_id, f, ap_label});
    for (std::size_t s = 0; s < b.stas.size(); ++s) {
      const Node &sta = b.stas[s];
      const auto obs = sta_observables(b.ap, ares, sta, ares.stas[s], opt);
      f = {1.0, sta.position.x, sta.position.y};
      channel_one_hots(f, b.ap);
      f.push_back(obs.sinr);
      f.push_back(0.0);
      std::optional<double> label;
      if (opt.labels) label = ares.stas[s].throughput_mbps;
      g.edges.push_back({ap_index.back(), g.nodes.size(),
                         {1.0, distance(b.ap.position, sta.position), obs.rssi, obs.interference}});
      g.nodes.push_back({NodeKind::STA, sta.code, b.ap.bss_id, f, label});
    }
  }
  const auto map = interference_map(opt.rf, d);
  for (std::size_t i = 0; i < d.bsss.size(); ++i)
    for (std::size_t j = 0; j < d.bsss.size(); ++j) {
      if (i == j) continue;
      // Edge j -> i: power from AP j received at AP i.
      const double at_i = plus_noise(r.aps[i].mean_interference_dbm, noise);
      g.edges.push_back({ap_index[j], ap_index[i],
                         {0.0, distance(d.bsss[i].ap.position, d.bsss[j].ap.position), map[i][j], at_i}});
    }
  g.validate();
  return g;
}

std::pair<std::string, std::string> graphs_to_csv(const std::vector<GraphSample> &graphs) {
  std::string nodes = std::string("# ") + kGraphNodesMagic + "\ndeployment,index,code,bss_id,label";
  for (std::size_t k = 0; k < kGraphNodeWidth; ++k) nodes += ",f" + std::to_string(k);
  nodes += "\n";
  std::string edges = std::string("# ") + kGraphEdgesMagic + "\ndeployment,src,dst,type,distance,rssi,interference\n";
  for (const auto &g : graphs) {
    g.validate();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const auto &n = g.nodes[i];
      nodes += g.deployment_id + "," + std::to_string(i) + "," + n.code + "," + n.bss + "," +
               (n.label ? csv::format(*n.label) : std::string());
      for (double v : n.features) nodes += "," + csv::format(v);
      nodes += "\n";
    }
    for (const auto &e : g.edges) {
      edges += g.deployment_id + "," + std::to_string(e.src) + "," + std::to_string(e.dst);
      for (double v : e.features) edges += "," + csv::format(v);
      edges += "\n";
    }
  }
  return {nodes, edges};
}

std::vector<GraphSample> graphs_from_csv(std::string_view nodes_text, std::string_view edges_text,
                                         const std::string &source) {
  const auto nd = csv::parse(nodes_text, source + " (nodes)");
  nd.require_magic(kGraphNodesMagic);
  std::vector<std::string> nh = {"deployment", "index", "code", "bss_id", "label"};
  for (std::size_t k = 0; k < kGraphNodeWidth; ++k) nh.push_back("f" + std::to_string(k));
  nd.require_header(nh);
  const auto ed = csv::parse(edges_text, source + " (edges)");
  ed.require_magic(kGraphEdgesMagic);
  ed.require_header({"deployment", "src", "dst", "type", "distance", "rssi", "interference"});

  std::vector<GraphSample> out;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t r = 0; r < nd.rows.size(); ++r) {
    const auto &dep = nd.text(r, 0);
    auto it = where.find(dep);
    if (it == where.end()) {
      it = where.emplace(dep, out.size()).first;
      out.push_back({dep, {}, {}});
    }
    auto &g = out[it->second];
    if (nd.integer(r, 1) != static_cast<long long>(g.nodes.size())) nd.fail(r, 1, "node indices must be consecutive");
    GraphNode n;
    n.code = nd.text(r, 2);
    n.bss = nd.text(r, 3);
    n.label = nd.optional_number(r, 4);
    for (std::size_t k = 0; k < kGraphNodeWidth; ++k) n.features.push_back(nd.number(r, 5 + k));
    if (n.features[0] != 0.0 && n.features[0] != 1.0) nd.fail(r, 5, "node type must be 0 (AP) or 1 (STA)");
    n.kind = n.features[0] == 0.0 ? NodeKind::AP : NodeKind::STA;
    g.nodes.push_back(std::move(n));
  }
  for (std::size_t r = 0; r < ed.rows.size(); ++r) {
    auto it = where.find(ed.text(r, 0));
    if (it == where.end()) ed.fail(r, 0, "edge refers to an unknown deployment");
    auto &g = out[it->second];
    GraphEdge e;
    const auto src = ed.integer(r, 1), dst = ed.integer(r, 2);
    if (src < 0 || static_cast<std::size_t>(src) >= g.nodes.size()) ed.fail(r, 1, "node index out of range");
    if (dst < 0 || static_cast<std::size_t>(dst) >= g.nodes.size()) ed.fail(r, 2, "node index out of range");
    e.src = static_cast<std::size_t>(src);
    e.dst = static_cast<std::size_t>(dst);
    for (std::size_t k = 0; k < kGraphEdgeWidth; ++k) e.features.push_back(ed.number(r, 3 + k));
    g.edges.push_back(std::move(e));
  }
  return out;
}

} // namespace cbnet
