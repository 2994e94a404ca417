#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rvio/config.hpp"
#include "rvio/delaunay.hpp"
#include "rvio/errors.hpp"
#include "rvio/ranged_facet.hpp"
#include "rvio/runner.hpp"
#include "rvio/state.hpp"

namespace py = pybind11;
using namespace rvio;

namespace {

Mode pick_mode(const ScenarioConfig& c, const std::optional<std::string>& mode) {
  return mode ? mode_from_string(*mode) : c.mode;
}

py::dict metrics_dict(const RunMetrics& m) {
  py::dict d;
  d["name"] = m.name;
  d["mode"] = to_string(m.mode);
  d["seed"] = m.seed;
  d["stream_checksum"] = m.stream_checksum;
  d["distance_m"] = m.distance;
  d["max_position_error_m"] = m.max_position_error;
  d["final_position_error_m"] = m.final_position_error;
  d["max_error_percent"] = m.max_error_percent;
  d["final_error_percent"] = m.final_error_percent;
  d["max_visual_innovation"] = m.max_visual_innovation;
  d["max_range_innovation_m"] = m.max_range_innovation;
  d["range_accepted"] = m.diagnostics.range_accepted;
  d["range_rejected"] = m.diagnostics.range_rejected;
  d["diverged"] = m.diverged;
  d["failure"] = m.failure;
  // t, ep_x, ep_y, ep_z in the traverse-aligned frame.
  MatX e(static_cast<Eigen::Index>(m.errors.size()), 4);
  for (std::size_t i = 0; i < m.errors.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    e(r, 0) = m.errors[i].t;
    e.block<1, 3>(r, 1) = m.errors[i].position.transpose();
  }
  d["errors"] = e;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Range-aided visual-inertial odometry simulator and filter";

  static py::exception<Error> error(m, "Error");
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_error.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readwrite("name", &ScenarioConfig::name)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("output_dir", &ScenarioConfig::output_dir)
      .def_property(
          "mode", [](const ScenarioConfig& c) { return std::string(to_string(c.mode)); },
          [](ScenarioConfig& c, const std::string& s) { c.mode = mode_from_string(s); })
      .def_property(
          "duration", [](const ScenarioConfig& c) { return c.trajectory.duration; },
          [](ScenarioConfig& c, double d) { c.trajectory.duration = d; })
      .def("to_json", &config_to_json)
      .def("validate", [](const ScenarioConfig& c) { validate(c); });

  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("load_config", [](const std::filesystem::path& p) { return load_config(p); }, py::arg("path"));

  m.def(
      "run",
      [](ScenarioConfig c, std::optional<std::string> mode, bool write) {
        c.mode = pick_mode(c, mode);
        RunOptions o;
        o.write_outputs = write;
        py::gil_scoped_release release;
        RunMetrics r = run_scenario(c, o);
        py::gil_scoped_acquire acquire;
        return metrics_dict(r);
      },
      py::arg("config"), py::arg("mode") = py::none(), py::arg("write") = false,
      "Simulate and filter one scenario; returns metrics and the error series.");

  m.def(
      "compare",
      [](const ScenarioConfig& c, bool write) {
        RunOptions o;
        o.write_outputs = write;
        Comparison r;
        {
          py::gil_scoped_release release;
          r = compare_modes(c, o);
        }
        py::dict d;
        d["vio"] = metrics_dict(r.vio);
        d["range_vio"] = metrics_dict(r.range_vio);
        d["ratio"] = r.ratio;
        return d;
      },
      py::arg("config"), py::arg("write") = false);

  m.def(
      "observability",
      [](ScenarioConfig c, std::optional<std::string> mode) {
        c.mode = pick_mode(c, mode);
        const ObservabilityResult r = run_observability(c, false);
        py::dict d;
        d["features"] = r.features;
        d["range_rows"] = r.range_rows;
        d["visual_rows"] = r.visual_rows;
        d["nullspace_dimension"] = r.report.dimension;
        d["singular_values"] = r.report.singular_values;
        d["scale_defined"] = r.scale_defined;
        d["scale_observable"] = r.scale_observable;
        py::dict dirs;
        for (const auto& x : r.report.directions) {
          dirs[py::str(x.name)] = py::make_tuple(x.residual, x.in_nullspace);
        }
        d["directions"] = dirs;
        d["text"] = r.text;
        return d;
      },
      py::arg("config"), py::arg("mode") = py::none());

  m.def(
      "sweep",
      [](const ScenarioConfig& c, std::size_t count, std::size_t threads) {
        std::vector<SweepEntry> r;
        {
          py::gil_scoped_release release;
          r = sweep(c, count, threads, {Mode::kVio, Mode::kRangeVio}, false);
        }
        py::list out;
        for (const auto& e : r) {
          py::dict d;
          d["seed"] = e.seed;
          if (e.vio) d["vio"] = metrics_dict(*e.vio);
          if (e.range_vio) d["range_vio"] = metrics_dict(*e.range_vio);
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("count"), py::arg("threads") = 1);

  m.def(
      "quat_to_rotation",
      [](const Eigen::Vector4d& wxyz) {
        return quat_to_rotation(Quaternion(wxyz[0], wxyz[1], wxyz[2], wxyz[3]));
      },
      py::arg("q_wxyz"), "World-to-body rotation C(q) of a scalar-first quaternion.");

  m.def(
      "facet_range",
      [](const Vec3& p1, const Vec3& p2, const Vec3& p3, const Vec3& origin, const Vec3& dir) {
        const RangeGeometry g = facet_range(p1, p2, p3, origin, dir.normalized());
        if (g.status != RangeStatus::kOk) return std::optional<double>{};
        return std::optional<double>{g.range};
      },
      py::arg("p1"), py::arg("p2"), py::arg("p3"), py::arg("origin"), py::arg("direction"),
      "Distance along the ray to the plane of the three points, or None.");

  m.def(
      "delaunay",
      [](const Eigen::Matrix<double, Eigen::Dynamic, 2>& pts) {
        std::vector<Vec2> v;
        for (Eigen::Index i = 0; i < pts.rows(); ++i) v.emplace_back(pts(i, 0), pts(i, 1));
        const auto t = delaunay(v);
        std::vector<std::array<int, 3>> tris;
        if (t) tris = t->triangles;
        return tris;
      },
      py::arg("points"), "Counter-clockwise index triples of the Delaunay triangulation.");
}
