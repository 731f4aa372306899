// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.
//
//   acceptance [--config-dir DIR] [--only NAME[,NAME...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "specdet/dctma.hpp"
#include "specdet/pipeline.hpp"
#include "specdet/rng.hpp"

#ifndef SPECDET_CONFIG_DIR
#define SPECDET_CONFIG_DIR "configs"
#endif

namespace fs = std::filesystem;
using namespace specdet;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_config_dir = SPECDET_CONFIG_DIR;
std::vector<evalrpt::RocReport> g_reports;  // every report produced, for the identity check

RunConfig desk_config(std::uint64_t seed) {
  RunConfig cfg;
  apply_config_file(cfg, g_config_dir / "desk.cfg");
  cfg.set("seed", std::to_string(seed));
  cfg.validate();
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("specdet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// ------------------------------------------------------------------ checks

Outcome gradient_audit() {
  const auto t0 = Clock::now();
  const auto audit = pipeline::gradient_audit(pipeline::audit_model(), 50, 0);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string worst_ns, parts;
  for (const auto& a : audit) {
    parts += fmt(" %s=%.1e", a.prefix.c_str(), a.report.max_relative_error);
    if (a.report.max_relative_error >= worst) {
      worst = a.report.max_relative_error;
      worst_ns = a.prefix;
    }
  }
  // Informational: the same audit with ReLU hidden/group activations.
  ModelConfig relu = pipeline::audit_model();
  relu.group_activation = Activation::kRelu;
  relu.hidden_activation = Activation::kRelu;
  double relu_worst = 0;
  for (const auto& a : pipeline::gradient_audit(relu, 50, 0)) {
    relu_worst = std::max(relu_worst, a.report.max_relative_error);
  }
  return {worst < 1e-4 && secs < 60.0,
          fmt("max rel err %.2e (%s), %.1f s;", worst, worst_ns.c_str(), secs) + parts +
              fmt("; relu variant %.2e", relu_worst)};
}

Outcome scan_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t T = 1 + rng.below(49);
    const std::size_t C = 4 + rng.below(29);
    const std::size_t N = 1 + rng.below(16);
    auto fill = [&rng](Tensor t, double lo, double hi) {
      for (double& v : t.storage()) v = rng.uniform(lo, hi);
      return t;
    };
    const Tensor x = fill(Tensor({T, C}), -1, 1);
    const Tensor dt = fill(Tensor({T, C}), 0.01, 1.0);
    const Tensor b = fill(Tensor({T, N}), -1, 1);
    const Tensor c = fill(Tensor({T, N}), -1, 1);
    std::vector<double> a(N);
    for (double& v : a) v = -rng.uniform(0.05, 8.0);
    const Var y = dctma::selective_scan(constant(x), constant(dt), constant(b), constant(c),
                                        constant(Tensor::vector(a)));
    // 64-bit step-by-step recurrence
    std::vector<double> h(C * N, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t ch = 0; ch < C; ++ch) {
        double yt = 0;
        for (std::size_t k = 0; k < N; ++k) {
          const double ab = std::exp(dt.at(t, ch) * a[k]);
          double& s = h[ch * N + k];
          s = ab * s + (ab - 1.0) / a[k] * b.at(t, k) * x.at(t, ch);
          yt += c.at(t, k) * s;
        }
        worst = std::max(worst, std::abs(yt - y->value.at(t, ch)));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 10.0, fmt("max abs err %.2e over 200 sequences, %.2f s", worst, secs)};
}

Outcome dct_isometry() {
  Rng rng(77);
  double worst_parseval = 0, worst_recon = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    Patch p;
    p.side = 1 + 2 * rng.below(4);
    p.bands = 4 + rng.below(125);
    p.values.resize(p.side * p.side * p.bands);
    for (double& v : p.values) v = rng.uniform(-1, 1);
    const Tensor f = dctma::dct_spectral(p);
    const Tensor x = dctma::spectral_matrix(p);
    const Tensor d = dctma::dct_matrix(p.bands);
    const auto part = dctma::build_partition(p.bands, 0.25, 0.60);
    const auto ml = part.mask(dctma::kLow), mm = part.mask(dctma::kMid), mh = part.mask(dctma::kHigh);
    const std::size_t tokens = p.side * p.side;
    double ex = 0, ef = 0;
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t i = 0; i < p.bands; ++i) {
        ex += x.at(i, t) * x.at(i, t);
        ef += f.at(i, t) * f.at(i, t);
        // D^T (M_L + M_M + M_H) D x, mask by mask
        double back = 0;
        for (std::size_t k = 0; k < p.bands; ++k) {
          back += d.at(k, i) * (ml[k] * f.at(k, t) + mm[k] * f.at(k, t) + mh[k] * f.at(k, t));
        }
        worst_recon = std::max(worst_recon, std::abs(back - x.at(i, t)));
      }
      for (std::size_t k = 0; k < p.bands; ++k) {
        if (ml[k] + mm[k] + mh[k] != 1.0) worst_recon = INFINITY;
      }
    }
    worst_parseval = std::max(worst_parseval, std::abs(ef - ex) / ex);
  }
  const auto p128 = dctma::build_partition(128, 0.25, 0.60);
  const std::size_t l = p128.size(dctma::kLow), m = p128.size(dctma::kMid), h = p128.size(dctma::kHigh);
  const bool pass = worst_parseval < 1e-6 && worst_recon < 1e-9 && l == 32 && m == 44 && h == 52;
  return {pass, fmt("parseval rel %.1e, reconstruction %.1e, B=128 split %zu/%zu/%zu", worst_parseval,
                    worst_recon, l, m, h)};
}

/// Compares two checkpoint files entry by entry. Returns the number of
/// entries under `prefixes` that differ and whether anything else changed.
std::pair<std::size_t, bool> checkpoint_diff(const fs::path& before, const fs::path& after,
                                             const std::vector<std::string>& prefixes,
                                             std::size_t& frozen_entries) {
  const ParamStore a = load_checkpoint(before), b = load_checkpoint(after);
  std::size_t frozen_changed = 0;
  bool other_changed = false;
  frozen_entries = 0;
  for (const auto& name : a.names()) {
    const bool same = a.value(name).storage() == b.value(name).storage();
    bool frozen = false;
    for (const auto& p : prefixes) frozen = frozen || name.rfind(p, 0) == 0;
    if (frozen) {
      ++frozen_entries;
      frozen_changed += same ? 0 : 1;
    } else {
      other_changed = other_changed || !same;
    }
  }
  return {frozen_changed, other_changed};
}

Outcome freeze_contract() {
  const fs::path dir = scratch("freeze");
  RunConfig cfg = desk_config(1);
  cfg.set("train.iterations", "100");
  cfg.set("train.frozen", "backbone/");
  const auto source = pipeline::build_source_data(pipeline::make_source(cfg));
  ParamStore store = init_parameters(cfg.model, cfg.seed);
  save_checkpoint(store, dir / "init.spdm");
  metatrain::meta_train_run(source, cfg.model, cfg.train, store);
  save_checkpoint(store, dir / "trained.spdm");
  std::size_t n_train = 0, n_tta = 0;
  const auto [train_changed, train_other] =
      checkpoint_diff(dir / "init.spdm", dir / "trained.spdm", {"backbone/"}, n_train);

  const auto target = pipeline::make_target(cfg);
  const auto prepared = pipeline::prepare_target(cfg, target.scene.cube, target.prior.values, store);
  const auto r = pipeline::adapt(cfg, prepared, store);
  save_checkpoint(store, dir / "adapted.spdm");
  const std::vector<std::string> tta_frozen(std::begin(ssplm::kTtaFrozen), std::end(ssplm::kTtaFrozen));
  const auto [tta_changed, tta_other] =
      checkpoint_diff(dir / "trained.spdm", dir / "adapted.spdm", tta_frozen, n_tta);
  fs::remove_all(dir);
  const bool pass = train_changed == 0 && tta_changed == 0 && n_train > 0 && n_tta > 0 && train_other &&
                    tta_other && r.trace.size() == 50;
  return {pass, fmt("meta-train 100 it: %zu/%zu backbone entries changed; tta %zu it: %zu/%zu frozen "
                    "entries changed; trainable entries moved: %s/%s",
                    train_changed, n_train, r.trace.size(), tta_changed, n_tta, train_other ? "yes" : "no",
                    tta_other ? "yes" : "no")};
}

Outcome auc_arithmetic() {
  const auto c = evalrpt::composite_metrics(0.99927, 0.98220, 0.16227);
  const double d_oa = std::abs(c.oa - 1.81919), d_snpr = std::abs(c.snpr - 6.05276);
  return {d_oa <= 1e-4 && d_snpr <= 1e-4,
          fmt("AUC_OA %.5f (|diff| %.1e), AUC_SNPR %.5f (|diff| %.1e, target 6.05276)", c.oa, d_oa, c.snpr,
              d_snpr)};
}

Outcome composite_identity() {
  // Random maps on top of everything the other checks produced.
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 50 + rng.below(500);
    std::vector<double> s(n);
    std::vector<std::uint8_t> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.uniform() < 0.1 ? 1 : 0;
      s[i] = std::min(1.0, std::max(0.0, rng.uniform() * 0.8 + (t[i] ? rng.uniform() * 0.4 : 0.0)));
    }
    t[0] = 1;
    t[1] = 0;
    g_reports.push_back(evalrpt::auc_suite(evalrpt::roc_curves(s, t, 1 + rng.below(2000))));
  }
  double worst = 0;
  for (const auto& r : g_reports) {
    worst = std::max(worst, std::abs(r.auc_oa - (r.auc_pf_pd + r.auc_tau_pd - r.auc_tau_pf)));
  }
  return {worst <= 1e-12, fmt("%zu reports, max |residual| %.1e", g_reports.size(), worst)};
}

struct E2eSummary {
  bool ran = false;
  std::vector<double> cosine, unadapted, adapted, seconds;
};
E2eSummary g_e2e;

void run_e2e() {
  if (g_e2e.ran) return;
  g_e2e.ran = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = Clock::now();
    const auto o = pipeline::run_synthetic(desk_config(seed));
    g_e2e.seconds.push_back(seconds_since(t0));
    g_e2e.cosine.push_back(o.cosine.auc_pf_pd);
    g_e2e.unadapted.push_back(o.unadapted.auc_pf_pd);
    g_e2e.adapted.push_back(o.adapted.auc_pf_pd);
    for (const auto* r : {&o.cosine, &o.unadapted, &o.adapted}) g_reports.push_back(*r);
    std::printf("  seed %llu: cosine %.4f  unadapted %.4f  adapted %.4f  (%.1f s)\n",
                static_cast<unsigned long long>(seed), o.cosine.auc_pf_pd, o.unadapted.auc_pf_pd,
                o.adapted.auc_pf_pd, g_e2e.seconds.back());
    std::fflush(stdout);
  }
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Outcome end_to_end() {
  run_e2e();
  const double m_ad = mean(g_e2e.adapted), m_cos = mean(g_e2e.cosine);
  double slowest = 0;
  for (double s : g_e2e.seconds) slowest = std::max(slowest, s);
  return {m_ad >= 0.95 && m_ad >= m_cos && slowest < 600.0,
          fmt("mean adapted AUC %.4f vs cosine %.4f (need >= 0.95 and >= cosine), slowest seed %.1f s", m_ad,
              m_cos, slowest)};
}

Outcome tta_non_degradation() {
  run_e2e();
  double worst = -INFINITY;
  for (std::size_t i = 0; i < g_e2e.adapted.size(); ++i) {
    worst = std::max(worst, g_e2e.unadapted[i] - g_e2e.adapted[i]);
  }
  return {worst <= 0.01, fmt("largest drop adapted vs unadapted %.4f (limit 0.01)", worst)};
}

Outcome quantile_check() {
  std::vector<double> s(100);
  for (std::size_t i = 0; i < 100; ++i) s[i] = static_cast<double>(i) / 99.0;
  const auto sets = ssplm::select_pseudo_labels(s, 0.95, 0.05);
  return {sets.positive.size() == 5 && sets.negative.size() == 5,
          fmt("%zu positive, %zu negative (tau_pos %.4f, tau_neg %.4f)", sets.positive.size(),
              sets.negative.size(), sets.tau_pos, sets.tau_neg)};
}

Outcome determinism() {
  const fs::path dir = scratch("determinism");
  RunConfig cfg = desk_config(1);
  const auto source = pipeline::build_source_data(pipeline::make_source(cfg));
  const ParamStore trained = pipeline::meta_train(cfg, source);
  const auto target = pipeline::make_target(cfg);
  std::vector<std::string> bytes;
  for (const char* threads : {"1", "1", "4"}) {
    RunConfig c = cfg;
    c.set("threads", threads);
    ParamStore store = trained;
    const auto prepared = pipeline::prepare_target(c, target.scene.cube, target.prior.values, store);
    const auto r = pipeline::adapt(c, prepared, store);
    const fs::path out = dir / ("map_" + std::to_string(bytes.size()) + ".sphm");
    ssplm::save_map(r.map, out);
    bytes.push_back(file_bytes(out));
  }
  fs::remove_all(dir);
  const bool repeat = bytes[0] == bytes[1], threads = bytes[0] == bytes[2];
  return {repeat && threads && !bytes[0].empty(),
          fmt("repeat run %s, threads 4 vs 1 %s (%zu bytes)", repeat ? "identical" : "DIFFERS",
              threads ? "identical" : "DIFFERS", bytes[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config-dir" && i + 1 < argc) {
      g_config_dir = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string item; std::getline(ss, item, ',');) only.push_back(item);
    } else {
      std::fprintf(stderr, "usage: acceptance [--config-dir DIR] [--only NAME,...]\n");
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"gradient-audit", gradient_audit},
      {"scan-equivalence", scan_equivalence},
      {"dct-isometry", dct_isometry},
      {"freeze-contract", freeze_contract},
      {"auc-arithmetic", auc_arithmetic},
      {"end-to-end", end_to_end},
      {"tta-non-degradation", tta_non_degradation},
      {"pseudo-label-quantile", quantile_check},
      {"determinism", determinism},
      {"composite-identity", composite_identity},
  };

  int failures = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
