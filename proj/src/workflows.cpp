#include "eeqt/workflows.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "eeqt/io.hpp"
#include "eeqt/quantum_fractal.hpp"
#include "eeqt/rng.hpp"

namespace eeqt {

namespace {

using Row = std::vector<std::string>;

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::int64_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

std::ostream& say(const RunOptions& opt) {
  static std::ostream null(nullptr);
  return opt.log ? *opt.log : null;
}

Json event_json(const TrajectoryEvent& e) {
  Json j = {{"t", e.time}, {"from", e.from}, {"to", e.to}};
  if (e.tag) j["at"] = {e.tag->x, e.tag->y};
  return j;
}

const char* outcome_name(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Reflected: return "reflected";
    case OutcomeKind::Transmitted: return "transmitted";
    case OutcomeKind::NoFirstEvent: return "no_first_event";
    case OutcomeKind::OneEventOnly: return "one_event_only";
  }
  return "?";
}

Json nullable(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

int run_validate_workflow(const Json& config, const RunOptions& opt) {
  const ToyConfig cfg = toy_config_from_json(config);
  RunManifest manifest(opt.out_dir, "validate", to_json(cfg), opt.seed, opt.workers);
  const auto res = run_validation(cfg, opt.seed, opt.workers);

  std::vector<Row> rows;
  const auto& m = res.pdp_series;
  for (size_t t = 0; t < m.times.size(); ++t)
    for (size_t k = 0; k < m.names.size(); ++k)
      rows.push_back({fmt(m.times[t]), m.names[k], fmt(m.mean[t][k]), fmt(m.se[t][k]),
                      fmt(res.master_series.mean[t][k])});
  write_csv(manifest.file("validation.csv"), {"time_fs", "observable", "pdp_mean", "pdp_se", "master"}, rows);

  Json report = Json::array();
  std::vector<Row> rep_rows;
  auto& log = say(opt);
  for (const auto& r : res.report.rows) {
    const bool ok = r.max_sigma <= cfg.n_sigma;
    report.push_back({{"observable", r.name},
                      {"max_abs_dev", r.max_abs_dev},
                      {"max_sigma", r.max_sigma},
                      {"worst_time_fs", r.worst_time},
                      {"pass", ok}});
    rep_rows.push_back({r.name, fmt(r.max_abs_dev), fmt(r.max_sigma), fmt(r.worst_time), ok ? "1" : "0"});
    log << (ok ? "ok   " : "FAIL ") << r.name << ": max " << r.max_sigma << " sigma at t = " << r.worst_time
        << " fs\n";
  }
  write_csv(manifest.file("report.csv"), {"observable", "max_abs_dev", "max_sigma", "worst_time_fs", "pass"},
            rep_rows);
  const int code = res.pass ? kExitOk : kExitAcceptance;
  manifest.set_result({{"pass", res.pass}, {"tolerance_sigma", cfg.n_sigma}, {"observables", report}});
  manifest.finish(code);
  log << (res.pass ? "validation passed" : "validation FAILED") << " (" << cfg.trajectories << " trajectories, "
      << cfg.n_sigma << " sigma tolerance)\n";
  return code;
}

int run_cloud_workflow(const Json& config, const RunOptions& opt) {
  const CloudConfig cfg = cloud_config_from_json(config);
  RunManifest manifest(opt.out_dir, "cloud", to_json(cfg), opt.seed, opt.workers);
  auto& log = say(opt);
  Json result = Json::object();
  bool pass = true;

  if (cfg.tracks) {
    const auto tr = run_track_experiment(*cfg.tracks, split_seed(opt.seed, 0), opt.workers);
    std::vector<Row> flips, angles;
    JsonlWriter events(manifest.file("track_events.jsonl"));
    for (size_t i = 0; i < tr.tracks.size(); ++i) {
      const auto& t = tr.tracks[i];
      for (size_t f = 0; f < t.flips.size(); ++f)
        flips.push_back({fmt(static_cast<int>(i)), fmt(static_cast<int>(f)), fmt(t.flips[f].time),
                         fmt(t.flips[f].site.x), fmt(t.flips[f].site.y)});
      angles.push_back({fmt(static_cast<int>(i)), fmt(static_cast<int>(t.flips.size())), fmt(tr.angles_deg[i])});
      Json ev = Json::array();
      for (const auto& e : t.record.events) ev.push_back(event_json(e));
      events.write({{"track", i}, {"seed", t.record.seed}, {"events", ev}});
    }
    events.close();
    write_csv(manifest.file("tracks.csv"), {"track", "flip", "time_fs", "x_angstrom", "y_angstrom"}, flips);
    write_csv(manifest.file("track_angles.csv"), {"track", "flips", "angle_deg"}, angles);
    result["tracks"] = {{"collected", tr.tracks.size()},
                        {"attempts", tr.attempts},
                        {"mean_abs_deviation_deg", tr.mean_abs_deviation_deg},
                        {"pass", tr.pass}};
    log << (tr.pass ? "ok   " : "FAIL ") << "tracks: " << tr.tracks.size() << " collected in " << tr.attempts
        << " attempts, mean |deviation| " << tr.mean_abs_deviation_deg << " deg\n";
    pass = pass && tr.pass;
  }

  if (cfg.grw) {
    const auto g = run_grw_check(*cfg.grw, split_seed(opt.seed, 1), opt.workers);
    std::vector<Row> rows;
    for (size_t t = 0; t < g.times.size(); ++t)
      for (size_t k = 0; k < g.names.size(); ++k)
        rows.push_back({fmt(g.times[t]), g.names[k], fmt(g.pdp[t][k]), fmt(g.se[t][k]), fmt(g.exact[t][k])});
    write_csv(manifest.file("grw.csv"), {"time_fs", "observable", "pdp_mean", "pdp_se", "effective"}, rows);
    result["grw"] = {{"max_sigma", g.max_sigma}, {"pass", g.pass}};
    log << (g.pass ? "ok   " : "FAIL ") << "effective equation: max deviation " << g.max_sigma << " sigma\n";
    pass = pass && g.pass;
  }

  if (cfg.born) {
    const auto b = run_born_check(*cfg.born, split_seed(opt.seed, 2), opt.workers);
    std::vector<Row> rows;
    for (size_t i = 0; i < b.sites.size(); ++i)
      rows.push_back({fmt(b.sites[i].x), fmt(b.histogram[i]), fmt(b.born[i])});
    write_csv(manifest.file("born.csv"), {"x_angstrom", "first_flip_fraction", "born_weight"}, rows);
    result["born"] = {{"l1", b.l1}, {"unflipped_fraction", b.unflipped_fraction}, {"pass", b.pass}};
    log << (b.pass ? "ok   " : "FAIL ") << "Born limit: L1 = " << b.l1 << "\n";
    pass = pass && b.pass;
  }

  result["pass"] = pass;
  manifest.set_result(result);
  const int code = pass ? kExitOk : kExitAcceptance;
  manifest.finish(code);
  return code;
}

int run_tunnel_workflow(const Json& config, const RunOptions& opt) {
  const TunnelScanConfig cfg = tunnel_config_from_json(config);
  RunManifest manifest(opt.out_dir, "tunnel", to_json(cfg), opt.seed, opt.workers);
  auto& log = say(opt);
  std::vector<std::vector<TunnelOutcome>> outcomes;
  const auto rows = run_scan(cfg.setup, cfg.parameter, cfg.values, cfg.trajectories, opt.seed, opt.workers,
                             cfg.d2_offset_angstrom, {}, cfg.event_log ? &outcomes : nullptr);

  const std::string pname = cfg.parameter == ScanParameter::Width ? "d_angstrom" : "v0_ev";
  std::vector<Row> out;
  Json points = Json::array();
  for (const auto& r : rows) {
    const auto& s = r.stats;
    out.push_back({fmt(r.value), fmt(s.n), fmt(s.reflected), fmt(s.transmitted), fmt(s.no_first_event),
                   fmt(s.one_event_only), fmt(s.tau_r.mean), fmt(s.tau_r.se), fmt(s.tau_t.mean), fmt(s.tau_t.se),
                   fmt(r.phase_plane), fmt(r.phase_packet), fmt(r.semiclassical_packet), fmt(r.larmor_plane),
                   fmt(r.larmor_packet)});
    points.push_back({{pname, r.value},
                      {"transmitted", s.transmitted},
                      {"tau_t_fs", nullable(s.tau_t.mean)},
                      {"tau_t_se_fs", nullable(s.tau_t.se)}});
    log << pname << " = " << r.value << ": T " << s.transmitted << " tau_T = " << s.tau_t.mean << " +- "
        << s.tau_t.se << " fs, R " << s.reflected << " tau_R = " << s.tau_r.mean << " fs\n";
  }
  write_csv(manifest.file("scan.csv"),
            {pname, "trajectories", "reflected", "transmitted", "no_first_event", "one_event_only", "tau_r_fs",
             "tau_r_se_fs", "tau_t_fs", "tau_t_se_fs", "phase_plane_fs", "phase_packet_fs",
             "semiclassical_packet_fs", "larmor_plane_fs", "larmor_packet_fs"},
            out);

  if (cfg.event_log) {
    JsonlWriter events(manifest.file("events.jsonl"));
    for (size_t p = 0; p < outcomes.size(); ++p)
      for (size_t i = 0; i < outcomes[p].size(); ++i) {
        const auto& o = outcomes[p][i];
        events.write({{"point", p},
                      {pname, cfg.values[p]},
                      {"trajectory", i},
                      {"outcome", outcome_name(o.kind)},
                      {"t0_fs", nullable(o.t0)},
                      {"t_end_fs", nullable(o.t_end)}});
      }
    events.close();
  }

  Json result = {{"points", points}};
  bool pass = true;
  if (cfg.check == "width_trend") {
    const auto c = check_width_trend(rows);
    result["check"] = {{"name", cfg.check},
                       {"increasing", c.increasing},
                       {"min_step_sigma", nullable(c.min_step_sigma)},
                       {"r_squared", c.r_squared},
                       {"pass", c.pass}};
    pass = c.pass;
    log << (c.pass ? "ok   " : "FAIL ") << "width trend: smallest step " << c.min_step_sigma
        << " sigma, r^2 = " << c.r_squared << "\n";
  } else if (cfg.check == "height_peak") {
    const auto c = check_height_peak(rows);
    result["check"] = {{"name", cfg.check},
                       {"argmax_ev", c.argmax},
                       {"drop_sigma", nullable(c.drop_sigma)},
                       {"pass", c.pass}};
    pass = c.pass;
    log << (c.pass ? "ok   " : "FAIL ") << "height peak: argmax " << c.argmax << " eV, last-vs-first drop "
        << c.drop_sigma << " sigma\n";
  }
  result["pass"] = pass;
  manifest.set_result(result);
  const int code = pass ? kExitOk : kExitAcceptance;
  manifest.finish(code);
  return code;
}

int run_fractal_workflow(const Json& config, const RunOptions& opt) {
  const FractalConfig cfg = fractal_config_from_json(config);
  RunManifest manifest(opt.out_dir, "fractal", to_json(cfg), opt.seed, opt.workers);
  auto& log = say(opt);
  Json result = Json::object();
  bool pass = true;
  const Vec3 start(0.0, 0.0, 1.0);

  if (cfg.points > 0) {
    const auto pts = chaos_game(start, cfg.a_fuzz, cfg.points, split_seed(opt.seed, 0), cfg.burn_in);
    std::vector<Row> rows;
    rows.reserve(pts.size());
    for (const auto& p : pts) rows.push_back({fmt(p.x()), fmt(p.y()), fmt(p.z())});
    write_csv(manifest.file("cloud.csv"), {"x", "y", "z"}, rows);
    result["cloud"] = {{"a_fuzz", cfg.a_fuzz}, {"points", pts.size()}};
    log << "cloud: " << pts.size() << " points at a = " << cfg.a_fuzz << "\n";
  }

  if (!cfg.dimension_a.empty()) {
    const auto scales = log_scales(cfg.scale_min_rad, cfg.scale_max_rad, cfg.scale_count);
    std::vector<Row> dims, counts;
    Json fits = Json::array();
    std::vector<double> d;
    for (size_t i = 0; i < cfg.dimension_a.size(); ++i) {
      const double a = cfg.dimension_a[i];
      const auto pts = chaos_game(start, a, cfg.dimension_points, split_seed(opt.seed, 1 + i), cfg.burn_in);
      const auto fit = box_counting_dimension(pts, scales);
      d.push_back(fit.dimension);
      dims.push_back({fmt(a), fmt(fit.dimension), fmt(fit.r_squared), fmt(fit.rms_residual)});
      for (size_t k = 0; k < fit.scales.size(); ++k)
        counts.push_back({fmt(a), fmt(fit.scales[k]), fmt(fit.counts[k])});
      fits.push_back({{"a_fuzz", a}, {"dimension", fit.dimension}, {"r_squared", fit.r_squared}});
      log << "dimension: a = " << a << " D = " << fit.dimension << " (r^2 " << fit.r_squared << ")\n";
    }
    write_csv(manifest.file("dimension.csv"), {"a_fuzz", "dimension", "r_squared", "rms_residual"}, dims);
    write_csv(manifest.file("box_counts.csv"), {"a_fuzz", "scale_rad", "occupied_cells"}, counts);
    bool decreasing = true;
    for (size_t i = 0; i + 1 < d.size(); ++i) decreasing = decreasing && d[i + 1] < d[i];
    result["dimension"] = {{"fits", fits}, {"decreasing", decreasing}};
    if (cfg.require_decreasing && !decreasing) {
      pass = false;
      log << "FAIL dimension is not strictly decreasing in a_fuzz\n";
    }
  }

  if (cfg.markov_iterations > 0) {
    const MarkovOperator op(cfg.markov_nside, cfg.a_fuzz, cfg.markov_samples_per_cell);
    SphereMeasure mu = SphereMeasure::uniform(cfg.markov_nside);
    std::vector<Row> rows;
    double max_mass_drift = 0.0;
    for (int n = 0; n < cfg.markov_iterations; ++n) {
      SphereMeasure next = op.apply(mu);
      max_mass_drift = std::max(max_mass_drift, std::abs(next.total() - mu.total()));
      rows.push_back({fmt(n), fmt(l1_distance(mu, next)), fmt(next.total())});
      mu = std::move(next);
    }
    write_csv(manifest.file("markov.csv"), {"n", "l1_to_next", "mass_next"}, rows);
    std::vector<Row> cells;
    cells.reserve(mu.mass.size());
    for (std::int64_t p = 0; p < mu.grid.size(); ++p) {
      const auto [z, phi] = mu.grid.center_zphi(p);
      cells.push_back({fmt(p), fmt(z), fmt(phi), fmt(mu.mass[static_cast<size_t>(p)])});
    }
    write_csv(manifest.file("markov_measure.csv"), {"cell", "z", "phi", "mass"}, cells);
    const auto hemi = hemisphere_grid(mu, cfg.hemisphere_size);
    std::vector<Row> img;
    for (int r = 0; r < cfg.hemisphere_size; ++r) {
      Row line;
      for (int c = 0; c < cfg.hemisphere_size; ++c)
        line.push_back(fmt(hemi[static_cast<size_t>(r) * cfg.hemisphere_size + c]));
      img.push_back(std::move(line));
    }
    Row header;
    for (int c = 0; c < cfg.hemisphere_size; ++c) header.push_back("c" + std::to_string(c));
    write_csv(manifest.file("markov_hemisphere.csv"), header, img);
    Json probes = Json::array();
    for (const auto& p : tetrahedral_symmetry_probes(mu)) probes.push_back({{"probe", p.name}, {"spread", p.spread}});
    result["markov"] = {{"iterations", cfg.markov_iterations},
                        {"max_mass_drift", max_mass_drift},
                        {"symmetry_probes", probes}};
    log << "markov: " << cfg.markov_iterations << " iterations at nside " << cfg.markov_nside
        << ", max mass drift " << max_mass_drift << "\n";
  }

  result["pass"] = pass;
  manifest.set_result(result);
  const int code = pass ? kExitOk : kExitAcceptance;
  manifest.finish(code);
  return code;
}

}  // namespace eeqt
