#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eeqt/config.hpp"
#include "eeqt/io.hpp"
#include "eeqt/quantum_fractal.hpp"
#include "eeqt/workflows.hpp"

namespace py = pybind11;
using namespace eeqt;

namespace {

Json parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(e.what());
  }
}

py::dict time_stat(const TimeStat& s) {
  py::dict d;
  d["count"] = s.count;
  d["mean"] = s.mean;
  d["se"] = s.se;
  return d;
}

py::dict tunnel_stats(const TunnelStats& s) {
  py::dict d;
  d["n"] = s.n;
  d["reflected"] = s.reflected;
  d["transmitted"] = s.transmitted;
  d["no_first_event"] = s.no_first_event;
  d["one_event_only"] = s.one_event_only;
  d["tau_r"] = time_stat(s.tau_r);
  d["tau_t"] = time_stat(s.tau_t);
  return d;
}

py::array_t<double> points_array(const std::vector<Vec3>& pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto a = out.mutable_unchecked<2>();
  for (size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) a(static_cast<py::ssize_t>(i), k) = pts[i][k];
  return out;
}

std::vector<Vec3> points_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 3) throw std::invalid_argument("points must have shape (n, 3)");
  auto a = arr.unchecked<2>();
  std::vector<Vec3> pts(static_cast<size_t>(arr.shape(0)));
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) pts[static_cast<size_t>(i)] = Vec3(a(i, 0), a(i, 1), a(i, 2));
  return pts;
}

Vec3 vec3(const std::array<double, 3>& r) { return Vec3(r[0], r[1], r[2]); }
std::array<double, 3> arr3(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compiled core of the eeqt package";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.attr("EXIT_OK") = kExitOk;
  m.attr("EXIT_ACCEPTANCE") = kExitAcceptance;
  m.attr("EXIT_USAGE") = kExitUsage;

  m.def(
      "run_workflow",
      [](const std::string& command, const std::string& config_json, const std::string& out_dir, std::uint64_t seed,
         int workers) {
        const Json cfg = parse(config_json);
        RunOptions opt;
        opt.out_dir = out_dir;
        opt.seed = seed;
        opt.workers = workers;
        py::gil_scoped_release release;
        if (command == "validate") return run_validate_workflow(cfg, opt);
        if (command == "cloud") return run_cloud_workflow(cfg, opt);
        if (command == "tunnel") return run_tunnel_workflow(cfg, opt);
        if (command == "fractal") return run_fractal_workflow(cfg, opt);
        throw ConfigError("unknown command '" + command + "'");
      },
      py::arg("command"), py::arg("config_json"), py::arg("out_dir"), py::arg("seed") = 42, py::arg("workers") = 1);

  m.def(
      "validate",
      [](const std::string& config_json, std::uint64_t seed, int workers) {
        const ToyConfig cfg = toy_config_from_json(parse(config_json));
        ValidationResult res;
        {
          py::gil_scoped_release release;
          res = run_validation(cfg, seed, workers);
        }
        py::list rows;
        for (const auto& r : res.report.rows) {
          py::dict d;
          d["observable"] = r.name;
          d["max_abs_dev"] = r.max_abs_dev;
          d["max_sigma"] = r.max_sigma;
          d["worst_time_fs"] = r.worst_time;
          rows.append(d);
        }
        py::dict out;
        out["pass"] = res.pass;
        out["report"] = rows;
        out["times"] = res.pdp_series.times;
        out["names"] = res.pdp_series.names;
        out["pdp_mean"] = res.pdp_series.mean;
        out["pdp_se"] = res.pdp_series.se;
        out["master"] = res.master_series.mean;
        return out;
      },
      py::arg("config_json") = "{}", py::arg("seed") = 42, py::arg("workers") = 1);

  m.def(
      "tunnel_scan",
      [](const std::string& config_json, std::uint64_t seed, int workers) {
        const TunnelScanConfig cfg = tunnel_config_from_json(parse(config_json));
        std::vector<ScanRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_scan(cfg.setup, cfg.parameter, cfg.values, cfg.trajectories, seed, workers,
                          cfg.d2_offset_angstrom);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["value"] = r.value;
          d["stats"] = tunnel_stats(r.stats);
          d["phase_plane"] = r.phase_plane;
          d["phase_packet"] = r.phase_packet;
          d["semiclassical_packet"] = r.semiclassical_packet;
          d["larmor_plane"] = r.larmor_plane;
          d["larmor_packet"] = r.larmor_packet;
          out.append(d);
        }
        return out;
      },
      py::arg("config_json") = "{}", py::arg("seed") = 42, py::arg("workers") = 1);

  m.def(
      "transmission_amplitude",
      [](double e, double v0, double d) { return transmission_amplitude(e, {v0, d}).t; }, py::arg("e_ev"),
      py::arg("v0_ev"), py::arg("d_angstrom"));
  m.def(
      "phase_time", [](double e, double v0, double d, double x1, double x2) { return phase_time(e, {v0, d}, x1, x2); },
      py::arg("e_ev"), py::arg("v0_ev"), py::arg("d_angstrom"), py::arg("x1_angstrom"), py::arg("x2_angstrom"));
  m.def(
      "semiclassical_time",
      [](double e, double v0, double d, double x1, double x2) { return semiclassical_time(e, {v0, d}, x1, x2); },
      py::arg("e_ev"), py::arg("v0_ev"), py::arg("d_angstrom"), py::arg("x1_angstrom"), py::arg("x2_angstrom"));
  m.def(
      "larmor_time",
      [](double e, double v0, double d, double x1, double x2) {
        return buttiker_larmor_traversal(e, {v0, d}, x1, x2);
      },
      py::arg("e_ev"), py::arg("v0_ev"), py::arg("d_angstrom"), py::arg("x1_angstrom"), py::arg("x2_angstrom"));
  m.def(
      "free_flight_time", [](double e, double length) { return free_flight_time(e, length); }, py::arg("e_ev"),
      py::arg("length_angstrom"));

  m.def(
      "ifs_map", [](const std::array<double, 3>& r, int i, double a) { return arr3(ifs_map(vec3(r), i, a)); },
      py::arg("r"), py::arg("i"), py::arg("a"));
  m.def(
      "ifs_probs", [](const std::array<double, 3>& r, double a) { return ifs_probs(vec3(r), a); }, py::arg("r"),
      py::arg("a"));
  m.def(
      "tetra_directions",
      [] {
        std::vector<Vec3> v(tetra_directions().begin(), tetra_directions().end());
        return points_array(v);
      });
  m.def(
      "chaos_game",
      [](double a, std::int64_t n, std::uint64_t seed, const std::array<double, 3>& r0, int burn_in) {
        std::vector<Vec3> pts;
        {
          py::gil_scoped_release release;
          pts = chaos_game(vec3(r0), a, n, seed, burn_in);
        }
        return points_array(pts);
      },
      py::arg("a"), py::arg("n"), py::arg("seed") = 42, py::arg("r0") = std::array<double, 3>{0.0, 0.0, 1.0},
      py::arg("burn_in") = 100);
  m.def(
      "box_counting_dimension",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points, double lo, double hi, int n) {
        const auto fit = box_counting_dimension(points_from(points), log_scales(lo, hi, n));
        py::dict d;
        d["dimension"] = fit.dimension;
        d["r_squared"] = fit.r_squared;
        d["scales"] = fit.scales;
        d["counts"] = fit.counts;
        return d;
      },
      py::arg("points"), py::arg("scale_min_rad") = 0.03, py::arg("scale_max_rad") = 0.5, py::arg("scale_count") = 9);

  m.def("sha256_file", [](const std::string& p) { return sha256_file(p); }, py::arg("path"));
}
