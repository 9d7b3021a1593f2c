#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "pim/analytics.hpp"
#include "pim/gridmap.hpp"
#include "pim/media.hpp"
#include "pim/metrics.hpp"
#include "pim/pimm.hpp"
#include "pim/qpsolver.hpp"

namespace py = pybind11;
using namespace pim;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
MacroblockGrid<T> to_grid(const Array<T>& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  MacroblockGrid<T> g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(g.cells().data(), a.data(), g.size() * sizeof(T));
  return g;
}

template <typename T, typename Out = T>
py::array_t<Out> from_grid(const MacroblockGrid<T>& g) {
  py::array_t<Out> out({g.rows(), g.cols()});
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) p[i] = static_cast<Out>(g.cells()[i]);
  return out;
}

media::Frame luma_frame(const Array<std::uint8_t>& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D luma array (height, width)");
  media::Frame f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), media::ChromaFormat::k420);
  std::memcpy(f.y().data(), a.data(), f.y().size());
  std::fill(f.u().begin(), f.u().end(), 128);
  std::fill(f.v().begin(), f.v().end(), 128);
  return f;
}

features::FeatureStack to_stack(const Array<double>& x) {
  if (x.ndim() != 3) throw DimensionError("expected a (rows, cols, channels) array");
  features::FeatureStack s;
  s.rows = static_cast<int>(x.shape(0));
  s.cols = static_cast<int>(x.shape(1));
  s.layout = {{"x", static_cast<int>(x.shape(2))}};
  s.data.assign(x.data(), x.data() + x.size());
  return s;
}

py::dict summary_dict(const analytics::TallySummary& s) {
  py::dict d;
  d["n"] = s.n;
  d["fraction"] = s.fraction;
  d["center"] = s.center;
  d["halfwidth"] = s.halfwidth;
  d["preference"] = s.preference ? py::object(py::float_(*s.preference)) : py::object(py::none());
  return d;
}

analytics::Interval interval(const std::string& name) {
  if (name == "wald") return analytics::Interval::kWald;
  if (name == "wilson") return analytics::Interval::kWilson;
  throw ConfigError("interval must be 'wald' or 'wilson'");
}

}  // namespace

PYBIND11_MODULE(_pim, m) {
  m.doc() = "Importance maps, bitrate-neutral ΔQP solving, quality metrics and preference analytics.";

  static py::exception<Error> error(m, "Error", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def(
      "solve_dqp",
      [](const Array<double>& importance, double span, double clamp) {
        qpsolver::SolverConfig cfg;
        cfg.span = span;
        cfg.clamp = clamp;
        const auto r = qpsolver::solve_dqp(to_grid(importance), cfg);
        py::dict rep;
        rep["offset"] = r.report.offset;
        rep["real_ratio"] = r.report.real_ratio;
        rep["rounded_ratio"] = r.report.rounded_ratio;
        rep["iterations"] = r.report.iterations;
        return py::make_tuple(from_grid(r.dqp), rep);
      },
      py::arg("importance"), py::arg("span") = 20.0, py::arg("clamp") = 10.0,
      "Bitrate-neutral ΔQP grid for a macroblock importance grid (0..255). Returns (dqp, report).");
  m.def("rate_weight", &qpsolver::rate_weight, py::arg("dqp"));
  m.def(
      "estimate_ratio", [](const Array<int>& dqp) { return qpsolver::estimate_ratio(to_grid(dqp)); },
      py::arg("dqp"));

  m.def(
      "pool_to_grid",
      [](const Array<std::uint8_t>& map, int video_w, int video_h) {
        if (map.ndim() != 2) throw DimensionError("expected a 2-D map");
        media::ImportanceMap im(static_cast<int>(map.shape(1)), static_cast<int>(map.shape(0)),
                                std::vector<std::uint8_t>(map.data(), map.data() + map.size()));
        return from_grid(gridmap::pool_to_grid(im, video_w, video_h));
      },
      py::arg("map"), py::arg("video_width"), py::arg("video_height"));
  m.def(
      "quantize_classes",
      [](const Array<double>& grid) { return from_grid(gridmap::quantize_classes(to_grid(grid))); },
      py::arg("grid"));

  m.def(
      "mb_psnr", [](const Array<std::uint8_t>& ref, const Array<std::uint8_t>& dist) {
        return from_grid(metrics::mb_psnr(luma_frame(ref), luma_frame(dist)).values);
      },
      py::arg("ref"), py::arg("dist"));
  m.def(
      "mb_ssim", [](const Array<std::uint8_t>& ref, const Array<std::uint8_t>& dist) {
        return from_grid(metrics::mb_ssim(luma_frame(ref), luma_frame(dist)).values);
      },
      py::arg("ref"), py::arg("dist"));
  m.def(
      "block_vif", [](const Array<std::uint8_t>& ref, const Array<std::uint8_t>& dist) {
        return from_grid(metrics::block_vif(luma_frame(ref), luma_frame(dist)).values);
      },
      py::arg("ref"), py::arg("dist"));

  m.def("preference", &analytics::preference, py::arg("p"),
        "p / (1 - p); None when p is 0 or 1.");
  m.def(
      "tally_summary",
      [](long prefer_a, long prefer_b, const std::string& iv) {
        return summary_dict(analytics::tally_summary({prefer_a, prefer_b}, interval(iv)));
      },
      py::arg("prefer_a"), py::arg("prefer_b"), py::arg("interval") = "wald");
  m.def(
      "summarize_dataset",
      [](const std::vector<std::tuple<std::string, long, long>>& rows, const std::string& iv) {
        std::vector<analytics::VideoTally> t;
        for (const auto& [id, a, b] : rows) t.push_back({id, {a, b}});
        const auto s = analytics::summarize_dataset(t, interval(iv));
        py::dict d;
        d["videos"] = s.videos;
        d["videos_preferred"] = s.videos_preferred;
        d["fraction_preferred"] = s.fraction_preferred;
        d["pooled"] = summary_dict(s.pooled);
        return d;
      },
      py::arg("tallies"), py::arg("interval") = "wald");

  m.def("parameter_count", &pimm::parameter_count, py::arg("channels"));

  py::class_<pimm::ModelWeights>(m, "Model")
      .def(py::init([](int channels, std::uint64_t seed, double dropout) { return pimm::init(channels, seed, dropout); }),
           py::arg("channels"), py::arg("seed") = 0, py::arg("dropout") = 0.2)
      .def_static(
          "load", [](const std::filesystem::path& p) { return pimm::load_weights(p); }, py::arg("path"))
      .def(
          "save", [](const pimm::ModelWeights& w, const std::filesystem::path& p) { pimm::save_weights(w, p); },
          py::arg("path"))
      .def_readonly("channels", &pimm::ModelWeights::channels)
      .def_property_readonly("parameter_count", [](const pimm::ModelWeights& w) { return w.params.count(); })
      .def(
          "predict_map",
          [](const pimm::ModelWeights& w, const Array<double>& x) { return from_grid(pimm::predict_map(w, to_stack(x))); },
          py::arg("features"))
      .def(
          "predict_classes",
          [](const pimm::ModelWeights& w, const Array<double>& x) {
            return from_grid(pimm::predict_classes(w, to_stack(x)));
          },
          py::arg("features"));

  m.def(
      "read_dqp",
      [](const std::filesystem::path& p) {
        py::list frames;
        for (const auto& g : media::read_dqp(p).frames) frames.append(from_grid(g));
        return frames;
      },
      py::arg("path"));
  m.def(
      "write_dqp",
      [](const std::filesystem::path& p, const std::vector<Array<int>>& frames) {
        media::DqpSidecar s;
        for (const auto& a : frames) s.frames.push_back(to_grid(a));
        if (!s.frames.empty()) {
          s.rows = static_cast<std::uint32_t>(s.frames[0].rows());
          s.cols = static_cast<std::uint32_t>(s.frames[0].cols());
        }
        media::write_dqp(s, p);
      },
      py::arg("path"), py::arg("frames"));
}
