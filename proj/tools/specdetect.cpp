// specdetect: synthetic scenes, meta-training, detection, adaptation and
// evaluation from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 validation failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "specdet/pipeline.hpp"

#ifndef SPECDET_VERSION
#define SPECDET_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace specdet;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;

/// Config files plus one string option per RunConfig key.
struct ConfigFlags {
  std::vector<std::string> files;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", files, "key=value config file (repeatable, later wins)")
        ->check(CLI::ExistingFile);
    for (const auto& key : RunConfig::keys()) {
      app->add_option("--" + key, values[key], "config key " + key)->group("Config keys");
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg;
    std::set<std::string> assigned;
    for (const auto& f : files) apply_config_file(cfg, f, &assigned);
    const bool seed_flag = app->count("--seed") > 0;
    if (!seed_flag && !assigned.count("seed")) {
      if (const char* env = std::getenv("SPECDETECT_SEED")) cfg.set("seed", env);
    }
    for (const auto& key : RunConfig::keys()) {
      if (app->count("--" + key) > 0) cfg.set(key, values.at(key));
    }
    cfg.validate();
    return cfg;
  }
};

fs::path prepare_out(const std::string& dir, const RunConfig& cfg) {
  const fs::path out(dir);
  fs::create_directories(out);
  write_run_config(cfg, out / "run.cfg");
  return out;
}

void write_tta_trace(const std::vector<ssplm::TtaRecord>& trace, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write trace: " + path.string());
  os << "iteration,loss_wbce,loss_self,objective,positives,negatives\n" << std::setprecision(17);
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.loss_wbce << ',' << r.loss_self << ',' << r.objective << ','
       << r.positives << ',' << r.negatives << '\n';
  }
}

ssplm::ScoreMap mask_map(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w) {
  ssplm::ScoreMap m{h, w, std::vector<double>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) m.values[i] = mask[i] ? 1.0 : 0.0;
  return m;
}

// ---------------------------------------------------------------- synth

int run_synth(const RunConfig& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out(out_dir, cfg);
  const auto target = pipeline::make_target(cfg);
  save_cube(target.scene.cube, &target.scene.labels, out / "scene.sphc");
  ssplm::save_map(mask_map(target.scene.implant_mask, target.scene.cube.height, target.scene.cube.width),
                  out / "truth.sphm");
  save_prior(target.prior, out / "prior.txt");

  const auto source = pipeline::make_source(cfg);
  save_cube(source.scene.cube, &source.scene.labels, out / "source.sphc");
  fs::create_directories(out / "source_priors");
  const std::size_t c = source.scene.class_spectra.size();
  for (std::size_t k = 0; k < c; ++k) {
    save_prior({static_cast<std::uint32_t>(k + 1), source.scene.class_spectra[k]},
               out / "source_priors" / ("class_" + std::to_string(k + 1) + ".txt"));
  }
  for (std::size_t k = 0; k < source.priors.size(); ++k) {
    save_prior(source.priors[k], out / "source_priors" / ("class_" + std::to_string(c + 1 + k) + ".txt"));
  }
  std::printf("wrote %s (target %zux%zux%zu, %zu implants; source with %zu materials)\n",
              out.string().c_str(), target.scene.cube.height, target.scene.cube.width,
              target.scene.cube.bands, cfg.synth.implant_count, cfg.source.materials);
  return 0;
}

// ----------------------------------------------------------- meta-train

std::map<std::uint16_t, std::vector<double>> load_class_priors(const std::string& dir,
                                                              const HsiCube& cube) {
  std::map<std::uint16_t, std::vector<double>> out;
  if (dir.empty()) return out;
  const std::regex name(R"(class_(\d+)\.txt)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (!entry.is_regular_file() || !std::regex_match(file, m, name)) continue;
    const unsigned long id = std::stoul(m[1].str());
    if (id == 0 || id > 0xFFFF) throw ValidationError("prior file with invalid class id: " + file);
    out[static_cast<std::uint16_t>(id)] = load_prior(entry.path(), cube.bands, cube.wavelengths).values;
  }
  return out;
}

int run_meta_train(const RunConfig& cfg, const std::string& source_path, const std::string& priors_dir,
                   const std::string& out_dir, bool verbose) {
  const CubeFile src = load_cube(source_path);
  if (!src.labels) throw ValidationError("source cube " + source_path + " carries no labels");
  const fs::path out = prepare_out(out_dir, cfg);
  const auto data = pipeline::build_source_data(src.cube, *src.labels, load_class_priors(priors_dir, src.cube));
  std::vector<metatrain::LossRecord> trace;
  const ParamStore store = pipeline::meta_train(cfg, data, &trace, [&](const metatrain::LossRecord& r) {
    if (verbose && (r.iteration % 50 == 0 || r.iteration + 1 == cfg.train.iterations)) {
      std::fprintf(stderr, "iter %zu  cl %.4f  de %.4f  phy %.4f  total %.4f\n", r.iteration, r.loss_cl,
                   r.loss_de, r.loss_phy, r.loss_total);
    }
  });
  save_checkpoint(store, out / "checkpoint.spdm");
  metatrain::write_loss_trace(trace, out / "loss_trace.csv");
  std::printf("meta-trained %zu iterations -> %s\n", trace.size(), (out / "checkpoint.spdm").string().c_str());
  return 0;
}

// --------------------------------------------------------- detect/adapt

struct TargetInputs {
  std::string cube;
  std::string prior;
  std::string checkpoint;
  std::string out;
  bool pgm = false;
};

pipeline::PreparedTarget load_target(const RunConfig& cfg, const TargetInputs& in, const ParamStore& store) {
  const CubeFile cube = load_cube(in.cube);
  const SpectralPrior prior = load_prior(in.prior, cube.cube.bands, cube.cube.wavelengths);
  return pipeline::prepare_target(cfg, cube.cube, prior.values, store);
}

int run_detect(const RunConfig& cfg, const TargetInputs& in) {
  const ParamStore store = load_checkpoint(in.checkpoint);
  const auto target = load_target(cfg, in, store);
  const fs::path out = prepare_out(in.out, cfg);
  const auto d = pipeline::detect(cfg, target, store);
  ssplm::save_map(d.head, out / "map.sphm");
  ssplm::save_map(d.cosine, out / "cosine.sphm");
  if (in.pgm) ssplm::save_pgm(d.head, out / "map.pgm");
  std::printf("wrote %s and %s\n", (out / "map.sphm").string().c_str(), (out / "cosine.sphm").string().c_str());
  return 0;
}

int run_adapt(const RunConfig& cfg, const TargetInputs& in, bool verbose) {
  ParamStore store = load_checkpoint(in.checkpoint);
  const auto target = load_target(cfg, in, store);
  const fs::path out = prepare_out(in.out, cfg);
  const auto r = pipeline::adapt(cfg, target, store, [&](const ssplm::TtaRecord& rec) {
    if (verbose) {
      std::fprintf(stderr, "iter %zu  wbce %.4f  self %.5f  |pos| %zu  |neg| %zu\n", rec.iteration,
                   rec.loss_wbce, rec.loss_self, rec.positives, rec.negatives);
    }
  });
  ssplm::save_map(r.map, out / "map.sphm");
  save_checkpoint(store, out / "checkpoint.spdm");
  write_tta_trace(r.trace, out / "tta_trace.csv");
  if (in.pgm) ssplm::save_pgm(r.map, out / "map.pgm");
  std::printf("adapted %zu iterations -> %s\n", r.trace.size(), (out / "map.sphm").string().c_str());
  return 0;
}

// ----------------------------------------------------------------- eval

int run_eval(const RunConfig& cfg, const std::string& map_path, const std::string& truth_path,
             const std::string& out_dir) {
  const ssplm::ScoreMap map = ssplm::load_map(map_path);
  const ssplm::ScoreMap truth = ssplm::load_map(truth_path);
  if (map.height != truth.height || map.width != truth.width) {
    throw ValidationError("map and truth extents differ");
  }
  const auto mask = pipeline::truth_mask(truth);
  const fs::path out = prepare_out(out_dir, cfg);
  const auto report = pipeline::evaluate(map, mask, cfg.grid);
  evalrpt::export_report(report, evalrpt::separability_stats(map.values, mask), out / "roc.csv",
                         out / "report.json");
  std::printf("auc_pf_pd %.5f  auc_tau_pd %.5f  auc_tau_pf %.5f  auc_oa %.5f  auc_snpr %s\n",
              report.auc_pf_pd, report.auc_tau_pd, report.auc_tau_pf, report.auc_oa,
              report.snpr_infinite ? "inf" : std::to_string(report.auc_snpr).c_str());
  return 0;
}

// ---------------------------------------------------------------- sweep

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run_sweep(const RunConfig& base, const std::string& key, const std::string& values,
              const std::string& seeds, const std::string& out_dir) {
  const auto list = split_list(values);
  if (list.empty()) throw ValidationError("--values needs at least one entry");
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split_list(seeds)) {
    RunConfig probe;
    probe.set("seed", s);
    seed_list.push_back(probe.seed);
  }
  if (seed_list.empty()) seed_list.push_back(base.seed);
  // validate every setting before spending time on any of them
  for (const auto& v : list) {
    RunConfig c = base;
    c.set(key, v);
    c.validate();
  }
  const fs::path out = prepare_out(out_dir, base);
  std::ofstream csv(out / "sweep.csv");
  if (!csv) throw std::runtime_error("cannot write " + (out / "sweep.csv").string());
  csv << key << ",seed,auc_pf_pd,auc_tau_pd,auc_tau_pf,auc_oa,auc_snpr,auc_cosine,auc_unadapted\n"
      << std::setprecision(17);
  for (const auto& v : list) {
    for (std::uint64_t seed : seed_list) {
      RunConfig c = base;
      c.set(key, v);
      c.set("seed", std::to_string(seed));
      const auto o = pipeline::run_synthetic(c);
      const auto& a = o.adapted;
      csv << c.get(key) << ',' << seed << ',' << a.auc_pf_pd << ',' << a.auc_tau_pd << ','
          << a.auc_tau_pf << ',' << a.auc_oa << ',';
      if (a.snpr_infinite) {
        csv << "inf";
      } else {
        csv << a.auc_snpr;
      }
      csv << ',' << o.cosine.auc_pf_pd << ',' << o.unadapted.auc_pf_pd << '\n';
      std::printf("%s=%s seed %llu: auc_pf_pd %.5f (cosine %.5f)\n", key.c_str(), c.get(key).c_str(),
                  static_cast<unsigned long long>(seed), a.auc_pf_pd, o.cosine.auc_pf_pd);
    }
  }
  return 0;
}

// ------------------------------------------------------------ gradcheck

int run_gradcheck(const RunConfig& cfg, std::size_t coordinates, double tolerance,
                  const std::string& out_dir) {
  const auto audit = pipeline::gradient_audit(pipeline::audit_model(), coordinates, cfg.seed);
  bool ok = true;
  std::ostringstream csv;
  csv << "namespace,coordinates,max_relative_error,worst_entry,worst_index\n" << std::setprecision(17);
  for (const auto& a : audit) {
    const bool pass = a.report.max_relative_error < tolerance;
    ok = ok && pass;
    std::printf("%-10s %3zu coords  max rel err %.3e  %s\n", a.prefix.c_str(), a.report.coordinates_checked,
                a.report.max_relative_error, pass ? "ok" : "FAIL");
    csv << a.prefix << ',' << a.report.coordinates_checked << ',' << a.report.max_relative_error << ','
        << a.report.worst_entry << ',' << a.report.worst_index << '\n';
  }
  if (!out_dir.empty()) {
    const fs::path out = prepare_out(out_dir, cfg);
    std::ofstream(out / "gradcheck.csv") << csv.str();
  }
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior-guided hyperspectral target detection"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress on stderr");

  ConfigFlags synth_flags, train_flags, detect_flags, adapt_flags, eval_flags, sweep_flags, grad_flags;
  std::string out_dir, source_path, priors_dir, map_path, truth_path, sweep_key, sweep_values, sweep_seeds;
  TargetInputs detect_in, adapt_in;
  std::size_t fd_coords = 50;
  double fd_tol = 1e-4;

  auto* synth = app.add_subcommand("synth", "generate a synthetic target scene and source scene");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth_flags.attach(synth);

  auto* train = app.add_subcommand("meta-train", "episodic meta-training on a labelled source cube");
  train->add_option("--source", source_path, "labelled SPHC cube")->required()->check(CLI::ExistingFile);
  train->add_option("--priors", priors_dir, "directory of class_<id>.txt reference spectra")
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", out_dir, "output directory")->required();
  train_flags.attach(train);

  auto add_target = [](CLI::App* sub, TargetInputs& in) {
    sub->add_option("--cube", in.cube, "target SPHC cube")->required()->check(CLI::ExistingFile);
    sub->add_option("--prior", in.prior, "target reference spectrum")->required()->check(CLI::ExistingFile);
    sub->add_option("--checkpoint", in.checkpoint, "meta-trained checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", in.out, "output directory")->required();
    sub->add_flag("--pgm", in.pgm, "also write a 16-bit graymap");
  };
  auto* detect = app.add_subcommand("detect", "detection map without adaptation (plus cosine baseline)");
  add_target(detect, detect_in);
  detect_flags.attach(detect);

  auto* adapt = app.add_subcommand("adapt", "test-time adaptation, then the detection map");
  add_target(adapt, adapt_in);
  adapt_flags.attach(adapt);

  auto* eval = app.add_subcommand("eval", "ROC curves, AUC metrics and separability statistics");
  eval->add_option("--map", map_path, "SPHM score map in [0,1]")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path, "SPHM truth map, nonzero at targets")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out_dir, "output directory")->required();
  eval_flags.attach(eval);

  auto* sweep = app.add_subcommand("sweep", "synthetic end-to-end runs over one config key");
  sweep->add_option("--param", sweep_key, "config key to vary")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seeds (default: the config seed)");
  sweep->add_option("--out", out_dir, "output directory")->required();
  sweep_flags.attach(sweep);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of every trainable namespace");
  grad->add_option("--coordinates", fd_coords, "coordinates per namespace")->check(CLI::PositiveNumber);
  grad->add_option("--tolerance", fd_tol, "maximum relative error")->check(CLI::PositiveNumber);
  grad->add_option("--out", out_dir, "optional output directory");
  grad_flags.attach(grad);

  app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(synth_flags.resolve(synth), out_dir);
    if (*train) return run_meta_train(train_flags.resolve(train), source_path, priors_dir, out_dir, verbose);
    if (*detect) return run_detect(detect_flags.resolve(detect), detect_in);
    if (*adapt) return run_adapt(adapt_flags.resolve(adapt), adapt_in, verbose);
    if (*eval) return run_eval(eval_flags.resolve(eval), map_path, truth_path, out_dir);
    if (*sweep) {
      const RunConfig base = sweep_flags.resolve(sweep);
      RunConfig().get(sweep_key);  // unknown keys fail before any work
      return run_sweep(base, sweep_key, sweep_values, sweep_seeds, out_dir);
    }
    if (*grad) return run_gradcheck(grad_flags.resolve(grad), fd_coords, fd_tol, out_dir);
    std::printf("specdetect %s\n", SPECDET_VERSION);
    return 0;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
