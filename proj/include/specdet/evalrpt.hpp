#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace specdet::evalrpt {

struct RocCurves {
  std::vector<double> tau;  // G+1 uniform points on [0,1]
  std::vector<double> pd;
  std::vector<double> pf;
  std::size_t targets = 0;
  std::size_t background = 0;
};

/// Sweeps τ over a uniform grid with the predicate score ≥ τ.
/// `truth` is nonzero at target pixels. Scores must lie in [0,1].
RocCurves roc_curves(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                     std::size_t grid = 1000);

struct Composite {
  double oa = 0;
  double snpr = 0;
  bool snpr_infinite = false;
};

/// AUC_OA = pf_pd + tau_pd − tau_pf; AUC_SNPR = tau_pd / tau_pf (flagged +∞ when tau_pf = 0).
Composite composite_metrics(double auc_pf_pd, double auc_tau_pd, double auc_tau_pf);

struct RocReport {
  RocCurves curves;
  double auc_pf_pd = 0;
  double auc_tau_pd = 0;
  double auc_tau_pf = 0;
  double auc_oa = 0;
  double auc_snpr = 0;
  bool snpr_infinite = false;
};

/// Trapezoidal areas (pairwise summation). The (P_f, P_d) curve is sorted by
/// P_f, ties keep the largest P_d, and the origin is included.
RocReport auc_suite(const RocCurves& curves);

/// Trapezoid rule over (x, y) points already ordered by x.
double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

struct FiveNumber {
  double min = 0;
  double q1 = 0;
  double median = 0;
  double q3 = 0;
  double max = 0;
};

FiveNumber five_number(std::vector<double> values);

struct SeparabilityStats {
  FiveNumber target;
  FiveNumber background;
};

SeparabilityStats separability_stats(const std::vector<double>& scores,
                                     const std::vector<std::uint8_t>& truth);

/// CSV rows (tau, pd, pf) under a header, plus the JSON summary.
void export_report(const RocReport& report, const SeparabilityStats& stats,
                   const std::filesystem::path& csv_path, const std::filesystem::path& json_path);

struct ReportSummary {
  double auc_pf_pd = 0;
  double auc_tau_pd = 0;
  double auc_tau_pf = 0;
  double auc_oa = 0;
  double auc_snpr = 0;
  bool snpr_infinite = false;
  std::size_t grid = 0;
  SeparabilityStats separability;
};

ReportSummary load_report_json(const std::filesystem::path& json_path);

/// Fixed key set of the JSON summary.
inline constexpr const char* kJsonKeys[] = {"auc_pf_pd",     "auc_tau_pd", "auc_tau_pf",
                                            "auc_oa",        "auc_snpr",   "snpr_infinite",
                                            "grid",          "targets",    "background",
                                            "separability"};

}  // namespace specdet::evalrpt
