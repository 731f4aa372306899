#include "specdet/evalrpt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "json.hpp"
#include "specdet/stats.hpp"
#include "specdet/tensor.hpp"

namespace specdet::evalrpt {

namespace {

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

void check_truth(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                 std::size_t& targets, std::size_t& background) {
  if (scores.size() != truth.size()) throw ValidationError("score map and truth differ in size");
  targets = 0;
  for (std::uint8_t t : truth) targets += t ? 1 : 0;
  background = truth.size() - targets;
  if (targets == 0 || background == 0) {
    throw ValidationError("truth must contain at least one target and one background pixel");
  }
}

}  // namespace

RocCurves roc_curves(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                     std::size_t grid) {
  if (grid == 0) throw ValidationError("grid size must be >= 1");
  RocCurves c;
  check_truth(scores, truth, c.targets, c.background);
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("score map must be normalised to [0,1]");
  }
  // Count pixels per score bucket so each threshold is O(1).
  const double g = static_cast<double>(grid);
  std::vector<std::size_t> tgt(grid + 2, 0), bkg(grid + 2, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    // number of grid thresholds k/G with k/G <= s
    std::size_t k = static_cast<std::size_t>(std::floor(scores[i] * g));
    while (k < grid && static_cast<double>(k + 1) / g <= scores[i]) ++k;
    while (k > 0 && static_cast<double>(k) / g > scores[i]) --k;
    (truth[i] ? tgt : bkg)[k] += 1;
  }
  c.tau.resize(grid + 1);
  c.pd.resize(grid + 1);
  c.pf.resize(grid + 1);
  std::size_t dt = 0, fb = 0;
  for (std::size_t k = grid + 1; k-- > 0;) {
    dt += tgt[k];
    fb += bkg[k];
    c.tau[k] = static_cast<double>(k) / g;
    c.pd[k] = static_cast<double>(dt) / static_cast<double>(c.targets);
    c.pf[k] = static_cast<double>(fb) / static_cast<double>(c.background);
  }
  return c;
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("trapezoid: x and y differ in length");
  if (x.size() < 2) return 0.0;
  std::vector<double> parts(x.size() - 1);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) parts[i] = 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return pairwise_sum(parts.data(), parts.size());
}

Composite composite_metrics(double auc_pf_pd, double auc_tau_pd, double auc_tau_pf) {
  Composite c;
  c.oa = auc_pf_pd + auc_tau_pd - auc_tau_pf;
  if (auc_tau_pf == 0.0) {
    c.snpr = std::numeric_limits<double>::infinity();
    c.snpr_infinite = true;
  } else {
    c.snpr = auc_tau_pd / auc_tau_pf;
  }
  return c;
}

RocReport auc_suite(const RocCurves& curves) {
  const std::size_t n = curves.tau.size();
  if (n < 2 || curves.pd.size() != n || curves.pf.size() != n) {
    throw ValidationError("auc_suite: curves must be aligned with a grid of at least two points");
  }
  RocReport r;
  r.curves = curves;

  std::vector<std::pair<double, double>> pts;
  pts.reserve(n + 1);
  pts.emplace_back(0.0, 0.0);
  for (std::size_t k = 0; k < n; ++k) pts.emplace_back(curves.pf[k], curves.pd[k]);
  std::sort(pts.begin(), pts.end());
  std::vector<double> x, y;
  for (const auto& [pf, pd] : pts) {
    if (!x.empty() && x.back() == pf) {
      y.back() = std::max(y.back(), pd);
    } else {
      x.push_back(pf);
      y.push_back(pd);
    }
  }
  r.auc_pf_pd = trapezoid(x, y);
  r.auc_tau_pd = trapezoid(curves.tau, curves.pd);
  r.auc_tau_pf = trapezoid(curves.tau, curves.pf);
  const Composite c = composite_metrics(r.auc_pf_pd, r.auc_tau_pd, r.auc_tau_pf);
  r.auc_oa = c.oa;
  r.auc_snpr = c.snpr;
  r.snpr_infinite = c.snpr_infinite;
  return r;
}

FiveNumber five_number(std::vector<double> values) {
  if (values.empty()) throw ValidationError("five-number summary of an empty set");
  std::sort(values.begin(), values.end());
  return {values.front(), quantile_sorted(values, 0.25), quantile_sorted(values, 0.5),
          quantile_sorted(values, 0.75), values.back()};
}

SeparabilityStats separability_stats(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& truth) {
  std::size_t targets = 0, background = 0;
  check_truth(scores, truth, targets, background);
  std::vector<double> t, b;
  t.reserve(targets);
  b.reserve(background);
  for (std::size_t i = 0; i < scores.size(); ++i) (truth[i] ? t : b).push_back(scores[i]);
  return {five_number(std::move(t)), five_number(std::move(b))};
}

namespace {

nlohmann::json five_json(const FiveNumber& f) {
  return {{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}};
}

FiveNumber five_from(const nlohmann::json& j) {
  return {j.at("min").get<double>(), j.at("q1").get<double>(), j.at("median").get<double>(),
          j.at("q3").get<double>(), j.at("max").get<double>()};
}

}  // namespace

void export_report(const RocReport& report, const SeparabilityStats& stats,
                   const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
  {
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("cannot write ROC table: " + csv_path.string());
    os << "tau,pd,pf\n" << std::setprecision(17);
    for (std::size_t k = 0; k < report.curves.tau.size(); ++k) {
      os << report.curves.tau[k] << ',' << report.curves.pd[k] << ',' << report.curves.pf[k] << '\n';
    }
    if (!os) throw std::runtime_error("failed writing ROC table: " + csv_path.string());
  }
  nlohmann::json j;
  j["auc_pf_pd"] = report.auc_pf_pd;
  j["auc_tau_pd"] = report.auc_tau_pd;
  j["auc_tau_pf"] = report.auc_tau_pf;
  j["auc_oa"] = report.auc_oa;
  j["auc_snpr"] = report.snpr_infinite ? nlohmann::json(nullptr) : nlohmann::json(report.auc_snpr);
  j["snpr_infinite"] = report.snpr_infinite;
  j["grid"] = report.curves.tau.empty() ? 0 : report.curves.tau.size() - 1;
  j["targets"] = report.curves.targets;
  j["background"] = report.curves.background;
  j["separability"] = {{"target", five_json(stats.target)}, {"background", five_json(stats.background)}};
  std::ofstream os(json_path);
  if (!os) throw std::runtime_error("cannot write report: " + json_path.string());
  os << std::setprecision(17) << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing report: " + json_path.string());
}

ReportSummary load_report_json(const std::filesystem::path& json_path) {
  std::ifstream is(json_path);
  if (!is) throw std::runtime_error("cannot open report: " + json_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed report " + json_path.string() + ": " + e.what());
  }
  ReportSummary s;
  s.auc_pf_pd = j.at("auc_pf_pd").get<double>();
  s.auc_tau_pd = j.at("auc_tau_pd").get<double>();
  s.auc_tau_pf = j.at("auc_tau_pf").get<double>();
  s.auc_oa = j.at("auc_oa").get<double>();
  s.snpr_infinite = j.at("snpr_infinite").get<bool>();
  s.auc_snpr = s.snpr_infinite ? std::numeric_limits<double>::infinity() : j.at("auc_snpr").get<double>();
  s.grid = j.at("grid").get<std::size_t>();
  s.separability.target = five_from(j.at("separability").at("target"));
  s.separability.background = five_from(j.at("separability").at("background"));
  return s;
}

}  // namespace specdet::evalrpt
