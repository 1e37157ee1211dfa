#include "eeqt/config.hpp"

#include <fstream>
#include <set>

namespace eeqt {

namespace {

/// Reads keys of one JSON object into fields; unknown keys are rejected by
/// finish().
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  Section& get(const char* key, T& field) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      field = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
    return *this;
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string& what) {
  if (!(v > 0.0)) throw ConfigError(what + " must be positive");
}

void positive(std::int64_t v, const std::string& what) {
  if (v <= 0) throw ConfigError(what + " must be positive");
}

void read_detector(Section s, Detector& d) {
  s.get("x_angstrom", d.x).get("width_angstrom", d.width).get("w0_ev", d.w0);
  s.finish();
}

}  // namespace

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in '" + path + "': " + e.what());
  }
}

ToyConfig toy_config_from_json(const Json& root) {
  ToyConfig c;
  Section top(root, "config");
  if (top.has("toy")) {
    Section s = top.sub("toy");
    s.get("n_labels", c.n_labels)
        .get("dim", c.dim)
        .get("model_seed", c.model_seed)
        .get("h_scale_ev", c.h_scale_ev)
        .get("rate_factor", c.rate_factor)
        .get("periods", c.periods)
        .get("dt_factor", c.dt_factor)
        .get("trajectories", c.trajectories)
        .get("samples", c.samples)
        .get("tolerance_sigma", c.n_sigma);
    s.finish();
  }
  top.finish();
  if (c.n_labels < 2 || c.dim < 1) throw ConfigError("toy: need n_labels >= 2 and dim >= 1");
  positive(c.h_scale_ev, "toy.h_scale_ev");
  positive(c.periods, "toy.periods");
  positive(c.dt_factor, "toy.dt_factor");
  positive(std::int64_t{c.trajectories}, "toy.trajectories");
  if (c.samples < 2) throw ConfigError("toy.samples must be >= 2");
  if (c.rate_factor < 0.0 || c.n_sigma < 0.0) throw ConfigError("toy: rate_factor and tolerance_sigma must be >= 0");
  return c;
}

CloudConfig cloud_config_from_json(const Json& root) {
  CloudConfig c;
  Section top(root, "config");
  if (top.has("tracks")) {
    TrackConfig t;
    Section s = top.sub("tracks");
    s.get("nx", t.nx)
        .get("ny", t.ny)
        .get("dx_angstrom", t.dx)
        .get("width_angstrom", t.width)
        .get("lambda_per_fs", t.lambda)
        .get("cutoff", t.cutoff)
        .get("sigma_angstrom", t.sigma)
        .get("k_per_angstrom", t.k)
        .get("t_cut_fs", t.t_cut)
        .get("dt_fs", t.dt)
        .get("tracks", t.tracks)
        .get("min_flips", t.min_flips)
        .get("max_attempts", t.max_attempts)
        .get("max_mean_deviation_deg", t.max_mean_deviation_deg);
    s.finish();
    if (t.nx < 3 || t.ny < 3) throw ConfigError("tracks: grid needs at least 3 points per axis");
    positive(t.dx, "tracks.dx_angstrom");
    positive(t.width, "tracks.width_angstrom");
    positive(t.dt, "tracks.dt_fs");
    positive(t.t_cut, "tracks.t_cut_fs");
    positive(t.sigma, "tracks.sigma_angstrom");
    if (t.lambda < 0.0) throw ConfigError("tracks.lambda_per_fs must be >= 0");
    c.tracks = t;
  }
  if (top.has("grw")) {
    GrwCheckConfig g;
    Section s = top.sub("grw");
    s.get("n_points", g.n_points)
        .get("x_min_angstrom", g.x_min)
        .get("x_max_angstrom", g.x_max)
        .get("width_angstrom", g.width)
        .get("lambda_per_fs", g.lambda)
        .get("separation_angstrom", g.separation)
        .get("sigma_angstrom", g.sigma)
        .get("k_per_angstrom", g.k)
        .get("t_end_fs", g.t_end)
        .get("dt_fs", g.dt)
        .get("rk4_dt_fs", g.rk4_dt)
        .get("samples", g.samples)
        .get("trajectories", g.trajectories)
        .get("tolerance_sigma", g.n_sigma);
    s.finish();
    if (!(g.x_max > g.x_min)) throw ConfigError("grw: x_max must exceed x_min");
    positive(g.dt, "grw.dt_fs");
    positive(g.rk4_dt, "grw.rk4_dt_fs");
    positive(std::int64_t{g.trajectories}, "grw.trajectories");
    c.grw = g;
  }
  if (top.has("born")) {
    BornConfig b;
    Section s = top.sub("born");
    s.get("n_points", b.n_points)
        .get("x_min_angstrom", b.x_min)
        .get("x_max_angstrom", b.x_max)
        .get("lambda_per_fs", b.lambda)
        .get("coupling_window_fs", b.delta_t)
        .get("dt_fs", b.dt)
        .get("samples", b.samples)
        .get("max_l1", b.max_l1);
    s.finish();
    if (!(b.x_max > b.x_min)) throw ConfigError("born: x_max must exceed x_min");
    positive(b.lambda, "born.lambda_per_fs");
    positive(b.dt, "born.dt_fs");
    positive(std::int64_t{b.samples}, "born.samples");
    c.born = b;
  }
  top.finish();
  if (!c.tracks && !c.grw && !c.born) throw ConfigError("cloud config needs a 'tracks', 'grw' or 'born' section");
  return c;
}

TunnelScanConfig tunnel_config_from_json(const Json& root) {
  TunnelScanConfig c;
  Section top(root, "config");
  auto& su = c.setup;
  if (top.has("barrier")) {
    Section s = top.sub("barrier");
    s.get("v0_ev", su.barrier.v0).get("d_angstrom", su.barrier.d);
    s.finish();
  }
  if (top.has("d1")) read_detector(top.sub("d1"), su.d1);
  if (top.has("d2")) read_detector(top.sub("d2"), su.d2);
  if (top.has("packet")) {
    Section s = top.sub("packet");
    s.get("x0_angstrom", su.packet.x0).get("eta_angstrom", su.packet.eta).get("e0_ev", su.packet.e0);
    s.finish();
  }
  if (top.has("numerics")) {
    auto& n = su.numerics;
    std::string shape = n.shape == DetectorShape::Box ? "box" : "gaussian";
    Section s = top.sub("numerics");
    s.get("dx_angstrom", n.dx)
        .get("dt_fs", n.dt)
        .get("t_cut_fs", n.t_cut)
        .get("detector_shape", shape)
        .get("margin_angstrom", n.margin)
        .get("absorber_length_angstrom", n.absorber_length)
        .get("absorber_strength_per_fs", n.absorber_strength)
        .get("packet_span_eta", n.packet_span);
    s.finish();
    if (shape == "box")
      n.shape = DetectorShape::Box;
    else if (shape == "gaussian")
      n.shape = DetectorShape::Gaussian;
    else
      throw ConfigError("numerics.detector_shape must be 'box' or 'gaussian'");
  }
  if (top.has("scan")) {
    std::string param = "width";
    Section s = top.sub("scan");
    s.get("parameter", param)
        .get("values", c.values)
        .get("trajectories", c.trajectories)
        .get("d2_offset_angstrom", c.d2_offset_angstrom)
        .get("check", c.check)
        .get("event_log", c.event_log);
    s.finish();
    if (param == "width")
      c.parameter = ScanParameter::Width;
    else if (param == "height")
      c.parameter = ScanParameter::Height;
    else
      throw ConfigError("scan.parameter must be 'width' or 'height'");
  }
  top.finish();
  if (c.values.empty()) c.values = {c.parameter == ScanParameter::Width ? su.barrier.d : su.barrier.v0};
  positive(std::int64_t{c.trajectories}, "scan.trajectories");
  if (c.check != "none" && c.check != "width_trend" && c.check != "height_peak")
    throw ConfigError("scan.check must be 'none', 'width_trend' or 'height_peak'");
  // Validate every scan point's layout up front.
  for (double v : c.values) {
    TunnelSetup s = su;
    if (c.parameter == ScanParameter::Width) {
      s.barrier.d = v;
      s.d2.x = v + c.d2_offset_angstrom;
    } else {
      s.barrier.v0 = v;
    }
    if (s.barrier.v0 < 0.0) throw ConfigError("barrier height must be >= 0");
    try {
      build_tunnel_model(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("tunnel layout: ") + e.what());
    }
  }
  return c;
}

FractalConfig fractal_config_from_json(const Json& root) {
  FractalConfig c;
  Section top(root, "config");
  if (top.has("cloud")) {
    Section s = top.sub("cloud");
    s.get("a_fuzz", c.a_fuzz).get("points", c.points).get("burn_in", c.burn_in);
    s.finish();
  }
  if (top.has("dimension")) {
    Section s = top.sub("dimension");
    s.get("a_fuzz", c.dimension_a)
        .get("points", c.dimension_points)
        .get("scale_min_rad", c.scale_min_rad)
        .get("scale_max_rad", c.scale_max_rad)
        .get("scale_count", c.scale_count)
        .get("require_decreasing", c.require_decreasing);
    s.finish();
  }
  if (top.has("markov")) {
    Section s = top.sub("markov");
    s.get("nside", c.markov_nside)
        .get("iterations", c.markov_iterations)
        .get("samples_per_cell", c.markov_samples_per_cell)
        .get("hemisphere_size", c.hemisphere_size);
    s.finish();
  }
  top.finish();
  auto check_a = [](double a) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("a_fuzz must lie in (0, 1)");
  };
  check_a(c.a_fuzz);
  for (double a : c.dimension_a) check_a(a);
  if (c.points < 0 || c.burn_in < 0) throw ConfigError("cloud.points and cloud.burn_in must be >= 0");
  if (!c.dimension_a.empty()) {
    positive(c.dimension_points, "dimension.points");
    if (!(c.scale_min_rad > 0.0 && c.scale_max_rad >= 10.0 * c.scale_min_rad))
      throw ConfigError("dimension scales must be positive and span a decade");
    if (c.scale_count < 4) throw ConfigError("dimension.scale_count must be >= 4");
  }
  if (c.markov_iterations < 0 || c.markov_nside < 1 || c.hemisphere_size < 2)
    throw ConfigError("markov: need iterations >= 0, nside >= 1, hemisphere_size >= 2");
  return c;
}

Json to_json(const ToyConfig& c) {
  return {{"toy",
           {{"n_labels", c.n_labels},
            {"dim", c.dim},
            {"model_seed", c.model_seed},
            {"h_scale_ev", c.h_scale_ev},
            {"rate_factor", c.rate_factor},
            {"periods", c.periods},
            {"dt_factor", c.dt_factor},
            {"trajectories", c.trajectories},
            {"samples", c.samples},
            {"tolerance_sigma", c.n_sigma}}}};
}

Json to_json(const CloudConfig& c) {
  Json j = Json::object();
  if (c.tracks) {
    const auto& t = *c.tracks;
    j["tracks"] = {{"nx", t.nx},
                   {"ny", t.ny},
                   {"dx_angstrom", t.dx},
                   {"width_angstrom", t.width},
                   {"lambda_per_fs", t.lambda},
                   {"cutoff", t.cutoff},
                   {"sigma_angstrom", t.sigma},
                   {"k_per_angstrom", t.k},
                   {"t_cut_fs", t.t_cut},
                   {"dt_fs", t.dt},
                   {"tracks", t.tracks},
                   {"min_flips", t.min_flips},
                   {"max_attempts", t.max_attempts},
                   {"max_mean_deviation_deg", t.max_mean_deviation_deg}};
  }
  if (c.grw) {
    const auto& g = *c.grw;
    j["grw"] = {{"n_points", g.n_points},
                {"x_min_angstrom", g.x_min},
                {"x_max_angstrom", g.x_max},
                {"width_angstrom", g.width},
                {"lambda_per_fs", g.lambda},
                {"separation_angstrom", g.separation},
                {"sigma_angstrom", g.sigma},
                {"k_per_angstrom", g.k},
                {"t_end_fs", g.t_end},
                {"dt_fs", g.dt},
                {"rk4_dt_fs", g.rk4_dt},
                {"samples", g.samples},
                {"trajectories", g.trajectories},
                {"tolerance_sigma", g.n_sigma}};
  }
  if (c.born) {
    const auto& b = *c.born;
    j["born"] = {{"n_points", b.n_points},
                 {"x_min_angstrom", b.x_min},
                 {"x_max_angstrom", b.x_max},
                 {"lambda_per_fs", b.lambda},
                 {"coupling_window_fs", b.delta_t},
                 {"dt_fs", b.dt},
                 {"samples", b.samples},
                 {"max_l1", b.max_l1}};
  }
  return j;
}

Json to_json(const TunnelScanConfig& c) {
  const auto& s = c.setup;
  const auto& n = s.numerics;
  auto det = [](const Detector& d) {
    return Json{{"x_angstrom", d.x}, {"width_angstrom", d.width}, {"w0_ev", d.w0}};
  };
  return {{"barrier", {{"v0_ev", s.barrier.v0}, {"d_angstrom", s.barrier.d}}},
          {"d1", det(s.d1)},
          {"d2", det(s.d2)},
          {"packet", {{"x0_angstrom", s.packet.x0}, {"eta_angstrom", s.packet.eta}, {"e0_ev", s.packet.e0}}},
          {"numerics",
           {{"dx_angstrom", n.dx},
            {"dt_fs", n.dt},
            {"t_cut_fs", n.t_cut},
            {"detector_shape", n.shape == DetectorShape::Box ? "box" : "gaussian"},
            {"margin_angstrom", n.margin},
            {"absorber_length_angstrom", n.absorber_length},
            {"absorber_strength_per_fs", n.absorber_strength},
            {"packet_span_eta", n.packet_span}}},
          {"scan",
           {{"parameter", c.parameter == ScanParameter::Width ? "width" : "height"},
            {"values", c.values},
            {"trajectories", c.trajectories},
            {"d2_offset_angstrom", c.d2_offset_angstrom},
            {"check", c.check},
            {"event_log", c.event_log}}}};
}

Json to_json(const FractalConfig& c) {
  return {{"cloud", {{"a_fuzz", c.a_fuzz}, {"points", c.points}, {"burn_in", c.burn_in}}},
          {"dimension",
           {{"a_fuzz", c.dimension_a},
            {"points", c.dimension_points},
            {"scale_min_rad", c.scale_min_rad},
            {"scale_max_rad", c.scale_max_rad},
            {"scale_count", c.scale_count},
            {"require_decreasing", c.require_decreasing}}},
          {"markov",
           {{"nside", c.markov_nside},
            {"iterations", c.markov_iterations},
            {"samples_per_cell", c.markov_samples_per_cell},
            {"hemisphere_size", c.hemisphere_size}}}};
}

}  // namespace eeqt
