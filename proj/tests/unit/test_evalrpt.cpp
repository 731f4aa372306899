#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "specdet/evalrpt.hpp"
#include "specdet/rng.hpp"
#include "specdet/tensor.hpp"

using namespace specdet;
using namespace specdet::evalrpt;

namespace {

struct Scene {
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
};

Scene random_scene(std::uint64_t seed, std::size_t n, double p_target = 0.5) {
  Rng rng(seed);
  Scene s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(rng.uniform(0, 1));
    s.truth.push_back(rng.uniform(0, 1) < p_target ? 1 : 0);
  }
  s.truth[0] = 1;
  s.truth[1] = 0;
  return s;
}

// Mann-Whitney probability that a target outscores a background pixel (ties 1/2).
double rank_auc(const Scene& s) {
  std::vector<double> t, b;
  for (std::size_t i = 0; i < s.scores.size(); ++i) (s.truth[i] ? t : b).push_back(s.scores[i]);
  std::sort(b.begin(), b.end());
  double wins = 0;
  for (double x : t) {
    const auto lo = std::lower_bound(b.begin(), b.end(), x);
    const auto hi = std::upper_bound(b.begin(), b.end(), x);
    wins += static_cast<double>(lo - b.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(t.size()) * static_cast<double>(b.size()));
}

}  // namespace

TEST_CASE("roc_curves: saturation examples") {
  const std::vector<double> scores = {1, 1, 1, 0, 0, 0, 0};
  const std::vector<std::uint8_t> truth = {1, 1, 1, 0, 0, 0, 0};
  const RocCurves c = roc_curves(scores, truth, 1000);
  REQUIRE(c.tau.size() == 1001);
  CHECK(c.tau.front() == 0.0);
  CHECK(c.tau.back() == 1.0);
  for (double pd : c.pd) CHECK(pd == 1.0);
  CHECK(c.pf[0] == 1.0);
  for (std::size_t k = 1; k < c.pf.size(); ++k) CHECK(c.pf[k] == 0.0);
  CHECK(c.targets == 3);
  CHECK(c.background == 4);
}

TEST_CASE("roc_curves: monotone and matches a direct sweep") {
  const Scene s = random_scene(4, 500);
  const RocCurves c = roc_curves(s.scores, s.truth, 200);
  for (std::size_t k = 1; k < c.tau.size(); ++k) {
    CHECK(c.pd[k] <= c.pd[k - 1]);
    CHECK(c.pf[k] <= c.pf[k - 1]);
  }
  for (std::size_t k : {0u, 1u, 57u, 133u, 199u, 200u}) {
    const double tau = static_cast<double>(k) / 200.0;
    double dt = 0, fb = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.scores[i] >= tau) (s.truth[i] ? dt : fb) += 1;
    }
    CHECK(c.pd[k] == doctest::Approx(dt / static_cast<double>(c.targets)).epsilon(1e-15));
    CHECK(c.pf[k] == doctest::Approx(fb / static_cast<double>(c.background)).epsilon(1e-15));
  }
}

TEST_CASE("roc_curves: scores on grid points count as detected") {
  const RocCurves c = roc_curves({0.3, 0.7, 0.29999999999999999, 0.71}, {1, 0, 0, 1}, 10);
  CHECK(c.pd[3] == 1.0);
  CHECK(c.pd[7] == 0.5);
  CHECK(c.pf[7] == 0.5);
  CHECK(c.pf[8] == 0.0);
}

TEST_CASE("roc_curves: errors") {
  CHECK_THROWS_AS(roc_curves({0.2, 1.2}, {1, 0}), ValidationError);
  CHECK_THROWS_AS(roc_curves({0.2, -0.1}, {1, 0}), ValidationError);
  CHECK_THROWS_AS(roc_curves({0.2, 0.3}, {1, 1}), ValidationError);
  CHECK_THROWS_AS(roc_curves({0.2, 0.3}, {0, 0}), ValidationError);
  CHECK_THROWS_AS(roc_curves({0.2}, {1, 0}), ValidationError);
  CHECK_THROWS_AS(roc_curves({0.2, std::nan("")}, {1, 0}), ValidationError);
}

TEST_CASE("auc_suite: perfect separation") {
  const std::vector<double> scores = {1, 1, 0, 0, 0};
  const std::vector<std::uint8_t> truth = {1, 1, 0, 0, 0};
  const RocReport r = auc_suite(roc_curves(scores, truth));
  CHECK(r.auc_pf_pd == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.auc_tau_pd == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.auc_tau_pf == doctest::Approx(0.0005).epsilon(1e-12));
}

TEST_CASE("composite metrics: table arithmetic") {
  const Composite c = composite_metrics(0.99927, 0.98220, 0.16227);
  CHECK(std::abs(c.oa - 1.81919) < 1e-4);
  MESSAGE("AUC_SNPR from rounded components = " << c.snpr << " (table: 6.05276)");
  CHECK(c.snpr == doctest::Approx(0.98220 / 0.16227).epsilon(1e-15));
  CHECK_FALSE(c.snpr_infinite);
  const Composite inf = composite_metrics(1.0, 1.0, 0.0);
  CHECK(inf.snpr_infinite);
  CHECK(std::isinf(inf.snpr));
}

TEST_CASE("auc_suite: composite identity and ranges on random maps") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = random_scene(seed, 400, 0.3);
    const RocReport r = auc_suite(roc_curves(s.scores, s.truth, 250));
    CHECK(r.auc_oa - (r.auc_pf_pd + r.auc_tau_pd - r.auc_tau_pf) == 0.0);
    for (double a : {r.auc_pf_pd, r.auc_tau_pd, r.auc_tau_pf}) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    CHECK(r.auc_oa >= -1.0);
    CHECK(r.auc_oa <= 2.0);
    CHECK(r.auc_snpr >= 0.0);
  }
}

TEST_CASE("auc_suite: chance level on random maps") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Scene s = random_scene(seed, 10000);
    const double a = auc_suite(roc_curves(s.scores, s.truth)).auc_pf_pd;
    CAPTURE(seed);
    CHECK(a >= 0.47);
    CHECK(a <= 0.53);
  }
}

TEST_CASE("auc_suite: converges to the rank statistic") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scene s = random_scene(seed + 10, 3000, 0.2);
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.truth[i]) s.scores[i] = std::min(1.0, s.scores[i] * 0.5 + 0.4);
    }
    const double a1000 = auc_suite(roc_curves(s.scores, s.truth, 1000)).auc_pf_pd;
    const double a2000 = auc_suite(roc_curves(s.scores, s.truth, 2000)).auc_pf_pd;
    CHECK(std::abs(a1000 - a2000) < 1e-3);
    CHECK(a2000 == doctest::Approx(rank_auc(s)).epsilon(2e-3));
  }
}

TEST_CASE("auc_suite: grid convergence of every area") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = random_scene(seed + 30, 2000, 0.4);
    const RocReport a = auc_suite(roc_curves(s.scores, s.truth, 1000));
    const RocReport b = auc_suite(roc_curves(s.scores, s.truth, 2000));
    CHECK(std::abs(a.auc_pf_pd - b.auc_pf_pd) < 1e-3);
    CHECK(std::abs(a.auc_tau_pd - b.auc_tau_pd) < 1e-3);
    CHECK(std::abs(a.auc_tau_pf - b.auc_tau_pf) < 1e-3);
  }
}

TEST_CASE("auc_suite: inverted map mirrors the ROC area") {
  const std::size_t G = 1000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scene s = random_scene(seed + 50, 2000, 0.3);
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.truth[i]) s.scores[i] = std::sqrt(s.scores[i]);
    }
    Scene inv = s;
    for (double& v : inv.scores) v = 1.0 - v;
    const double a = auc_suite(roc_curves(s.scores, s.truth, G)).auc_pf_pd;
    const double b = auc_suite(roc_curves(inv.scores, inv.truth, G)).auc_pf_pd;
    CHECK(std::abs(a - (1.0 - b)) <= 2.0 / G);
  }
}

TEST_CASE("auc_suite: ties keep the largest P_d") {
  RocCurves c;
  c.tau = {0.0, 0.5, 1.0};
  c.pd = {1.0, 0.5, 0.0};
  c.pf = {1.0, 0.0, 0.0};
  const RocReport r = auc_suite(c);
  // points (0,0), (0,0.5), (0,0) collapse to (0,0.5); then (1,1)
  CHECK(r.auc_pf_pd == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(auc_suite(RocCurves{}), ValidationError);
}

TEST_CASE("trapezoid") {
  CHECK(trapezoid({0, 1, 2}, {0, 1, 0}) == 1.0);
  CHECK(trapezoid({0}, {3}) == 0.0);
  CHECK_THROWS_AS(trapezoid({0, 1}, {0}), ValidationError);
}

TEST_CASE("separability statistics") {
  const FiveNumber t = five_number({0.9, 0.9});
  for (double v : {t.min, t.q1, t.median, t.q3, t.max}) CHECK(v == 0.9);
  const FiveNumber f = five_number({4, 0, 3, 1, 2});
  CHECK(f.min == 0);
  CHECK(f.q1 == 1);
  CHECK(f.median == 2);
  CHECK(f.q3 == 3);
  CHECK(f.max == 4);
  CHECK_THROWS_AS(five_number({}), ValidationError);

  Scene s = random_scene(8, 300);
  const SeparabilityStats a = separability_stats(s.scores, s.truth);
  Rng rng(3);
  std::vector<std::size_t> order(s.scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  Scene p;
  for (std::size_t i : order) {
    p.scores.push_back(s.scores[i]);
    p.truth.push_back(s.truth[i]);
  }
  const SeparabilityStats b = separability_stats(p.scores, p.truth);
  CHECK(a.target.median == b.target.median);
  CHECK(a.background.q1 == b.background.q1);
  CHECK(a.background.q3 == b.background.q3);
  for (const FiveNumber& x : {a.target, a.background}) {
    CHECK(x.min <= x.q1);
    CHECK(x.q1 <= x.median);
    CHECK(x.median <= x.q3);
    CHECK(x.q3 <= x.max);
  }
  CHECK_THROWS_AS(separability_stats({0.1, 0.2}, {0, 0}), ValidationError);
}

TEST_CASE("export_report round trip and schema") {
  const Scene s = random_scene(21, 600, 0.25);
  const RocReport r = auc_suite(roc_curves(s.scores, s.truth, 100));
  const SeparabilityStats st = separability_stats(s.scores, s.truth);
  const auto dir = std::filesystem::temp_directory_path();
  export_report(r, st, dir / "specdet_roc.csv", dir / "specdet_report.json");

  std::ifstream csv(dir / "specdet_roc.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "tau,pd,pf");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 101);

  const ReportSummary back = load_report_json(dir / "specdet_report.json");
  CHECK(back.auc_pf_pd == doctest::Approx(r.auc_pf_pd).epsilon(1e-9));
  CHECK(back.auc_tau_pd == doctest::Approx(r.auc_tau_pd).epsilon(1e-9));
  CHECK(back.auc_tau_pf == doctest::Approx(r.auc_tau_pf).epsilon(1e-9));
  CHECK(back.auc_oa == doctest::Approx(r.auc_oa).epsilon(1e-9));
  CHECK(back.auc_snpr == doctest::Approx(r.auc_snpr).epsilon(1e-9));
  CHECK(back.grid == 100);
  CHECK(back.separability.target.median == doctest::Approx(st.target.median).epsilon(1e-9));

  std::ifstream js(dir / "specdet_report.json");
  const auto j = nlohmann::json::parse(js);
  std::set<std::string> keys, expected;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  for (const char* k : kJsonKeys) expected.insert(k);
  CHECK(keys == expected);

  std::filesystem::remove(dir / "specdet_roc.csv");
  std::filesystem::remove(dir / "specdet_report.json");
  CHECK_THROWS_AS(export_report(r, st, dir / "no_such_dir" / "a.csv", dir / "b.json"),
                  std::runtime_error);
  CHECK_THROWS_AS(load_report_json(dir / "no_such_dir" / "x.json"), std::runtime_error);
}

TEST_CASE("export_report: infinite SNPR is written as null") {
  const std::vector<double> scores = {1, 1, 0, 0};
  const std::vector<std::uint8_t> truth = {1, 1, 0, 0};
  RocReport r = auc_suite(roc_curves(scores, truth, 10));
  r.auc_tau_pf = 0.0;
  r.auc_snpr = composite_metrics(r.auc_pf_pd, r.auc_tau_pd, 0.0).snpr;
  r.snpr_infinite = true;
  const auto dir = std::filesystem::temp_directory_path();
  export_report(r, separability_stats(scores, truth), dir / "specdet_inf.csv", dir / "specdet_inf.json");
  std::ifstream js(dir / "specdet_inf.json");
  const auto j = nlohmann::json::parse(js);
  CHECK(j["auc_snpr"].is_null());
  CHECK(j["snpr_infinite"].get<bool>());
  const ReportSummary back = load_report_json(dir / "specdet_inf.json");
  CHECK(std::isinf(back.auc_snpr));
  std::filesystem::remove(dir / "specdet_inf.csv");
  std::filesystem::remove(dir / "specdet_inf.json");
}
