#include "cbnet/eval.hpp"

#include "cbnet/csv.hpp"
#include "cbnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace cbnet {

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InvalidArgument("prediction and truth lengths differ");
  if (pred.empty()) throw InvalidArgument("scoring needs at least one sample");
}

double abs_error(double p, double t) { return std::abs(std::max(p, 0.0) - std::max(t, 0.0)); }

} // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += abs_error(pred[i], truth[i]);
  return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_lengths(pred, truth);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += abs_error(pred[i], truth[i]) * abs_error(pred[i], truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double share_below(std::span<const double> pred, std::span<const double> truth, double threshold) {
  check_lengths(pred, truth);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) n += abs_error(pred[i], truth[i]) < threshold;
  return static_cast<double>(n) / static_cast<double>(pred.size());
}

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

Histogram error_histogram(std::span<const double> pred, std::span<const double> truth, double bin_width, double max) {
  check_lengths(pred, truth);
  if (!(bin_width > 0) || !(max > 0)) throw InvalidArgument("histogram bin width and range must be > 0");
  Histogram h;
  h.bin_width = bin_width;
  h.max = max;
  const auto regular = static_cast<std::size_t>(std::ceil(max / bin_width));
  h.counts.assign(regular + 1, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = abs_error(pred[i], truth[i]);
    const auto b = e >= max ? regular : std::min(regular - 1, static_cast<std::size_t>(e / bin_width));
    ++h.counts[b];
  }
  return h;
}

BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("box statistics of an empty sample");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.size(), v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

double EvalReport::mae_ratio() const {
  const Score *m = nullptr, *b = nullptr;
  for (const auto &s : scores)
    if (s.scenario == "all" && s.granularity == granularity) (s.model == "baseline" ? b : m) = &s;
  if (!m || !b) throw InvalidArgument("report has no pooled scores");
  if (b->mae == 0) throw InvalidArgument("baseline MAE is zero");
  return m->mae / b->mae;
}

EvalReport make_report(const std::string &model, double baseline, const std::vector<ScenarioPredictions> &scenarios,
                       const EvalOptions &opt) {
  EvalReport r;
  r.model = model;
  r.baseline = baseline;
  r.options = opt;
  bool have_level = false;
  struct Pool {
    std::vector<double> pred, base, truth;
  };
  std::map<Granularity, Pool> all;
  std::vector<double> all_hist_pred, all_hist_truth;

  auto score = [&](const std::string &scenario, Granularity g, const Pool &p) {
    r.scores.push_back({scenario, g, model, p.truth.size(), mae(p.pred, p.truth), rmse(p.pred, p.truth),
                        share_below(p.pred, p.truth, opt.threshold)});
    r.scores.push_back({scenario, g, "baseline", p.truth.size(), mae(p.base, p.truth), rmse(p.base, p.truth),
                        share_below(p.base, p.truth, opt.threshold)});
  };
  auto append = [](Pool &to, const Pool &from) {
    to.pred.insert(to.pred.end(), from.pred.begin(), from.pred.end());
    to.base.insert(to.base.end(), from.base.begin(), from.base.end());
    to.truth.insert(to.truth.end(), from.truth.begin(), from.truth.end());
  };

  for (const auto &sc : scenarios) {
    const auto &t = sc.table;
    if (!t.labelled() || t.rows() == 0) {
      r.warnings.push_back("scenario " + sc.scenario + " has no labelled rows; skipped");
      continue;
    }
    if (sc.predictions.size() != t.rows())
      throw InvalidArgument("scenario " + sc.scenario + ": " + std::to_string(sc.predictions.size()) +
                            " predictions for " + std::to_string(t.rows()) + " rows");
    const auto g = t.schema.granularity;
    if (!have_level) {
      r.granularity = g;
      have_level = true;
    } else if (g != r.granularity) {
      throw InvalidArgument("scenario " + sc.scenario + " mixes granularities");
    }
    Pool own{sc.predictions, std::vector<double>(t.rows(), baseline), t.labels};
    score(sc.scenario, g, own);
    append(all[g], own);
    r.histograms.emplace_back(sc.scenario, error_histogram(own.pred, own.truth, opt.bin_width, opt.histogram_max));
    all_hist_pred.insert(all_hist_pred.end(), own.pred.begin(), own.pred.end());
    all_hist_truth.insert(all_hist_truth.end(), own.truth.begin(), own.truth.end());
    r.labels.emplace_back(sc.scenario, g, box_stats(t.labels));

    if (g == Granularity::STA) {
      // BSS view: sums over each BSS, in first-appearance order.
      std::map<std::pair<std::string, std::string>, std::size_t> index;
      Pool bss;
      for (std::size_t i = 0; i < t.rows(); ++i) {
        auto [it, added] = index.emplace(std::pair(t.deployment[i], t.bss[i]), bss.truth.size());
        if (added) {
          bss.pred.push_back(0);
          bss.base.push_back(0);
          bss.truth.push_back(0);
        }
        bss.pred[it->second] += sc.predictions[i];
        bss.base[it->second] += baseline;
        bss.truth[it->second] += t.labels[i];
      }
      score(sc.scenario, Granularity::BSS, bss);
      append(all[Granularity::BSS], bss);
      r.labels.emplace_back(sc.scenario, Granularity::BSS, box_stats(bss.truth));
    }
  }
  if (!have_level) throw InvalidArgument("no scenario has labelled rows");
  for (const auto &[g, p] : all) score("all", g, p);
  r.histograms.emplace_back("all", error_histogram(all_hist_pred, all_hist_truth, opt.bin_width, opt.histogram_max));
  return r;
}

void write_report(const EvalReport &r, const std::filesystem::path &dir) {
  const std::string note = "# predictions clamped at 0 before scoring\n";
  std::string mae_csv = note + "scenario,granularity,model,rows,mae,rmse\n";
  std::string share_csv = note + "scenario,granularity,model,threshold,share_below\n";
  for (const auto &s : r.scores) {
    mae_csv += csv::join({s.scenario, to_string(s.granularity), s.model, std::to_string(s.rows), csv::format(s.mae),
                          csv::format(s.rmse)}) +
               "\n";
    share_csv += csv::join({s.scenario, to_string(s.granularity), s.model, csv::format(r.options.threshold),
                            csv::format(s.share_below)}) +
                 "\n";
  }
  std::string hist_csv = note + "scenario,granularity,bin_lo,bin_hi,count\n";
  for (const auto &[scenario, h] : r.histograms)
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      const bool last = b + 1 == h.counts.size();
      hist_csv += csv::join({scenario, to_string(r.granularity), csv::format(last ? h.max : b * h.bin_width),
                             last ? "inf" : csv::format(std::min(h.max, (b + 1) * h.bin_width)),
                             std::to_string(h.counts[b])}) +
                  "\n";
    }
  std::string box_csv = "scenario,granularity,n,min,q1,median,q3,max\n";
  for (const auto &[scenario, g, b] : r.labels)
    box_csv += csv::join({scenario, to_string(g), std::to_string(b.n), csv::format(b.min), csv::format(b.q1),
                          csv::format(b.median), csv::format(b.q3), csv::format(b.max)}) +
               "\n";
  csv::write_file(dir / "mae_by_scenario.csv", mae_csv);
  csv::write_file(dir / "share_below.csv", share_csv);
  csv::write_file(dir / "error_histogram.csv", hist_csv);
  csv::write_file(dir / "label_boxplot.csv", box_csv);
}

std::string summary_table(const EvalReport &r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(14) << "scenario" << std::setw(6) << "level" << std::setw(12) << "model" << std::right
     << std::setw(7) << "rows" << std::setw(10) << "MAE" << std::setw(10) << "RMSE" << std::setw(9) << "<thr" << "\n";
  for (const auto &s : r.scores)
    os << std::left << std::setw(14) << s.scenario << std::setw(6) << to_string(s.granularity) << std::setw(12)
       << s.model << std::right << std::setw(7) << s.rows << std::setw(10) << s.mae << std::setw(10) << s.rmse
       << std::setw(9) << s.share_below << "\n";
  os << "MAE ratio (model / baseline, " << to_string(r.granularity) << "): " << r.mae_ratio() << "\n";
  for (const auto &w : r.warnings) os << "warning: " << w << "\n";
  return os.str();
}

} // namespace cbnet
