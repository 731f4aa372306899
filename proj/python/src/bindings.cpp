#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "specdet/pipeline.hpp"

namespace py = pybind11;
using namespace specdet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

py::array_t<float> cube_to_numpy(const HsiCube& cube) {
  py::array_t<float> out({cube.height, cube.width, cube.bands});
  std::memcpy(out.mutable_data(), cube.data.data(), cube.data.size() * sizeof(float));
  return out;
}

HsiCube cube_from_numpy(const FloatArray& a, const std::vector<double>& wavelengths) {
  if (a.ndim() != 3) throw ValidationError("cube must be a 3-d array (height, width, bands)");
  HsiCube cube(a.shape(0), a.shape(1), a.shape(2));
  std::memcpy(cube.data.data(), a.data(), cube.data.size() * sizeof(float));
  cube.wavelengths = wavelengths;
  return cube;
}

py::array_t<std::uint16_t> labels_to_numpy(const LabelMap& l) {
  py::array_t<std::uint16_t> out({l.height, l.width});
  std::memcpy(out.mutable_data(), l.labels.data(), l.labels.size() * sizeof(std::uint16_t));
  return out;
}

template <class T>
py::array_t<double> grid_to_numpy(const std::vector<T>& v, std::size_t h, std::size_t w) {
  py::array_t<double> out({h, w});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ssplm::ScoreMap map_from_numpy(const DoubleArray& a) {
  if (a.ndim() != 2) throw ValidationError("score map must be a 2-d array");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
          std::vector<double>(a.data(), a.data() + a.size())};
}

py::dict report_to_dict(const evalrpt::RocReport& r) {
  py::dict d;
  d["tau"] = r.curves.tau;
  d["pd"] = r.curves.pd;
  d["pf"] = r.curves.pf;
  d["auc_pf_pd"] = r.auc_pf_pd;
  d["auc_tau_pd"] = r.auc_tau_pd;
  d["auc_tau_pf"] = r.auc_tau_pf;
  d["auc_oa"] = r.auc_oa;
  d["auc_snpr"] = r.snpr_infinite ? py::float_(INFINITY) : py::float_(r.auc_snpr);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prior-guided hyperspectral target detection";
  m.attr("__version__") = SPECDET_VERSION;

  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("get", &RunConfig::get, py::arg("key"))
      .def("validate", &RunConfig::validate)
      .def("serialize", &RunConfig::serialize)
      .def_static("keys", &RunConfig::keys)
      .def("load", [](RunConfig& c, const std::filesystem::path& p) { apply_config_file(c, p); },
           py::arg("path"), "Apply a key = value config file on top of the current values.")
      .def("update", [](RunConfig& c, const std::string& text) { apply_config_text(c, text); },
           py::arg("text"))
      .def("__getitem__", &RunConfig::get)
      .def("__setitem__", [](RunConfig& c, const std::string& k, py::object v) {
        c.set(k, py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false")
                                              : py::str(v).cast<std::string>());
      })
      .def("__repr__", [](const RunConfig& c) { return "RunConfig(seed=" + c.get("seed") + ")"; });

  m.def("load_cube", [](const std::filesystem::path& path) {
    const CubeFile f = load_cube(path);
    py::object labels = f.labels ? py::object(labels_to_numpy(*f.labels)) : py::none();
    return py::make_tuple(cube_to_numpy(f.cube), labels, f.cube.wavelengths);
  }, py::arg("path"), "Read an SPHC file: (cube[h,w,b] float32, labels[h,w] uint16 or None, wavelengths).");

  m.def("save_cube", [](const std::filesystem::path& path, const FloatArray& cube, py::object labels,
                        const std::vector<double>& wavelengths) {
    const HsiCube c = cube_from_numpy(cube, wavelengths);
    if (labels.is_none()) return save_cube(c, nullptr, path);
    const LabelArray la = labels.cast<LabelArray>();
    if (la.ndim() != 2 || static_cast<std::size_t>(la.shape(0)) != c.height ||
        static_cast<std::size_t>(la.shape(1)) != c.width) {
      throw ValidationError("labels must be (height, width)");
    }
    LabelMap l(c.height, c.width);
    std::memcpy(l.labels.data(), la.data(), l.labels.size() * sizeof(std::uint16_t));
    save_cube(c, &l, path);
  }, py::arg("path"), py::arg("cube"), py::arg("labels") = py::none(),
     py::arg("wavelengths") = std::vector<double>{});

  m.def("normalize_bands", [](const FloatArray& cube) {
    const auto n = normalize_bands(cube_from_numpy(cube, {}));
    return py::make_tuple(cube_to_numpy(n.cube), n.stats.min, n.stats.max);
  }, py::arg("cube"), "Per-band min-max scaling: (normalized, band_min, band_max).");

  m.def("load_prior", [](const std::filesystem::path& p, std::size_t bands, const std::vector<double>& wl) {
    return load_prior(p, bands, wl).values;
  }, py::arg("path"), py::arg("bands"), py::arg("wavelengths") = std::vector<double>{});

  m.def("load_map", [](const std::filesystem::path& p) {
    const auto s = ssplm::load_map(p);
    return grid_to_numpy(s.values, s.height, s.width);
  }, py::arg("path"));
  m.def("save_map", [](const std::filesystem::path& p, const DoubleArray& a) {
    ssplm::save_map(map_from_numpy(a), p);
  }, py::arg("path"), py::arg("scores"));

  m.def("synthetic_target", [](const RunConfig& cfg) {
    const auto t = pipeline::make_target(cfg);
    const auto& s = t.scene;
    py::dict d;
    d["cube"] = cube_to_numpy(s.cube);
    d["labels"] = labels_to_numpy(s.labels);
    d["truth"] = grid_to_numpy(s.implant_mask, s.cube.height, s.cube.width);
    d["abundances"] = grid_to_numpy(s.abundances, s.cube.height, s.cube.width);
    d["prior"] = t.prior.values;
    return d;
  }, py::arg("config"), "Synthetic target scene and its reference spectrum for config.seed.");

  m.def("roc", [](const DoubleArray& scores, const py::array_t<std::uint8_t, py::array::forcecast>& truth,
                  std::size_t grid) {
    if (scores.size() != truth.size()) throw ValidationError("scores and truth differ in size");
    std::vector<double> s(scores.data(), scores.data() + scores.size());
    std::vector<std::uint8_t> t(truth.data(), truth.data() + truth.size());
    return report_to_dict(evalrpt::auc_suite(evalrpt::roc_curves(s, t, grid)));
  }, py::arg("scores"), py::arg("truth"), py::arg("grid") = 1000);

  m.def("composite_metrics", [](double pf_pd, double tau_pd, double tau_pf) {
    const auto c = evalrpt::composite_metrics(pf_pd, tau_pd, tau_pf);
    return py::make_tuple(c.oa, c.snpr_infinite ? INFINITY : c.snpr);
  }, py::arg("auc_pf_pd"), py::arg("auc_tau_pd"), py::arg("auc_tau_pf"), "(AUC_OA, AUC_SNPR)");

  m.def("select_pseudo_labels", [](const DoubleArray& scores, double q_pos, double q_neg) {
    const auto p = ssplm::select_pseudo_labels(std::vector<double>(scores.data(), scores.data() + scores.size()),
                                               q_pos, q_neg);
    py::dict d;
    d["positive"] = p.positive;
    d["negative"] = p.negative;
    d["tau_pos"] = p.tau_pos;
    d["tau_neg"] = p.tau_neg;
    return d;
  }, py::arg("scores"), py::arg("q_pos") = 0.95, py::arg("q_neg") = 0.05);

  m.def("run_synthetic", [](const RunConfig& cfg) {
    pipeline::SyntheticOutcome o;
    {
      py::gil_scoped_release release;
      o = pipeline::run_synthetic(cfg);
    }
    py::dict d;
    d["cosine"] = report_to_dict(o.cosine);
    d["unadapted"] = report_to_dict(o.unadapted);
    d["adapted"] = report_to_dict(o.adapted);
    d["map"] = grid_to_numpy(o.adapted_map.values, o.adapted_map.height, o.adapted_map.width);
    std::vector<double> loss;
    for (const auto& r : o.trace) loss.push_back(r.loss_total);
    d["loss_trace"] = loss;
    d["train_seconds"] = o.train_seconds;
    d["adapt_seconds"] = o.adapt_seconds;
    return d;
  }, py::arg("config"), "Synthesise, meta-train, detect, adapt and score one seed.");
}
