#include "eeqt/tunneling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "eeqt/rng.hpp"

namespace eeqt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Half-extent of a detector's support around its center.
double detector_extent(const Detector& d, DetectorShape shape, double dx) {
  return shape == DetectorShape::Box ? d.width + dx : 5.0 * d.width;
}

GridSpace aligned_grid(double lo, double hi, double dx) {
  const long i0 = static_cast<long>(std::floor(lo / dx));
  const long i1 = static_cast<long>(std::ceil(hi / dx));
  GridSpace g;
  g.x = {static_cast<double>(i0) * dx, static_cast<double>(i1) * dx, static_cast<int>(i1 - i0 + 1)};
  return g;
}

RealVector barrier_potential(const GridSpace& grid, const Barrier& b) {
  RealVector v = RealVector::Zero(grid.size());
  const double tol = 1e-9 * grid.x.spacing();
  for (int i = 0; i < grid.size(); ++i) {
    const double x = grid.x.coord(i);
    if (x >= -tol && x <= b.d + tol) v[i] = b.v0;
  }
  return v;
}

std::shared_ptr<const GridProfile> profile_from(const GridSpace& grid, const RealVector& values) {
  return std::make_shared<const GridProfile>(
      make_profile(grid, [&](double x, double) {
        const long i = std::lround((x - grid.x.min) / grid.x.spacing());
        return values[i];
      }));
}

// Quadratic absorbing layers of length L at both ends (amplitude profile).
RealVector absorber_profile(const GridSpace& grid, double length, double strength) {
  RealVector g = RealVector::Zero(grid.size());
  if (strength <= 0.0 || length <= 0.0) return g;
  const double lo = grid.x.min + length;
  const double hi = grid.x.max - length;
  for (int i = 0; i < grid.size(); ++i) {
    const double x = grid.x.coord(i);
    double s = 0.0;
    if (x < lo) s = (lo - x) / length;
    if (x > hi) s = (x - hi) / length;
    g[i] = std::sqrt(strength) * s;
  }
  return g;
}

Vector packet_state(const GridSpace& grid, const TunnelPacket& p, const Units& units) {
  const double k0 = std::sqrt(p.e0 / units.hbar2_over_2m);
  Vector psi(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const double x = grid.x.coord(i) - p.x0;
    psi[i] = std::polar(std::exp(-x * x / (4.0 * p.eta * p.eta)), k0 * grid.x.coord(i));
  }
  return psi / std::sqrt(norm2_in(grid, psi));
}

// cos(sqrt(u) d), sin(sqrt(u) d)/sqrt(u) and their u-derivatives, for real u
// of either sign (analytic continuation through u = 0).
struct CS {
  double c, s, dc, ds;
};

CS cos_sinc(double u, double d) {
  CS r{};
  const double z = u * d * d;
  if (std::abs(z) < 0.5) {
    // Power series in z = u d^2.
    double a = 1.0, s = 1.0;       // (-z)^n / (2n+1)!
    double bn = -1.0 / 6.0, ds = bn;  // (-1)^n z^(n-1) / (2n+1)!, weighted by n
    double cn = 1.0, c = 1.0;      // (-z)^n / (2n)!
    for (int n = 1; n < 20; ++n) {
      a *= -z / ((2.0 * n) * (2.0 * n + 1.0));
      s += a;
      cn *= -z / ((2.0 * n - 1.0) * (2.0 * n));
      c += cn;
      if (n > 1) {
        bn *= -z / ((2.0 * n) * (2.0 * n + 1.0));
        ds += n * bn;
      }
    }
    r.c = c;
    r.s = d * s;
    r.ds = d * d * d * ds;
  } else if (u > 0.0) {
    const double q = std::sqrt(u);
    r.c = std::cos(q * d);
    r.s = std::sin(q * d) / q;
    r.ds = (d * r.c - r.s) / (2.0 * u);
  } else {
    const double kappa = std::sqrt(-u);
    r.c = std::cosh(kappa * d);
    r.s = std::sinh(kappa * d) / kappa;
    r.ds = (d * r.c - r.s) / (2.0 * u);
  }
  r.dc = -0.5 * d * r.s;
  return r;
}

// D = 1/T and its derivatives with respect to E and V0.
struct Denominator {
  cplx d, d_e, d_v;
  double k = 0.0;
  CS cs{};
  double u = 0.0;
};

Denominator denominator(double e, const Barrier& b, const Units& units) {
  if (!(e > 0.0)) throw std::invalid_argument("energy must be positive");
  if (b.d < 0.0) throw std::invalid_argument("barrier width must be non-negative");
  const double c = units.hbar2_over_2m;
  Denominator r;
  r.k = std::sqrt(e / c);
  r.u = (e - b.v0) / c;
  r.cs = cos_sinc(r.u, b.d);
  const double k = r.k, k2 = k * k, u = r.u;
  const auto& cs = r.cs;
  r.d = cplx(cs.c, -(k2 + u) * cs.s / (2.0 * k));
  const double dk_de = 1.0 / (2.0 * c * k);
  const double im_e = -(2.0 / c * cs.s + (k2 + u) * cs.ds / c) / (2.0 * k) + (k2 + u) * cs.s / (2.0 * k2) * dk_de;
  r.d_e = cplx(cs.dc / c, im_e);
  r.d_v = cplx(-cs.dc / c, (cs.s + (k2 + u) * cs.ds) / (2.0 * k * c));
  return r;
}

double simpson(const std::vector<double>& f, double h) {
  const size_t n = f.size();
  double s = f.front() + f.back();
  for (size_t i = 1; i + 1 < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f[i];
  return s * h / 3.0;
}

}  // namespace

RealVector detector_profile(const Detector& det, DetectorShape shape, const GridSpace& grid, const Units& units) {
  RealVector g = RealVector::Zero(grid.size());
  const double dx = grid.x.spacing();
  const double peak = det.w0 / units.hbar;
  for (int i = 0; i < grid.size(); ++i) {
    const double r = std::abs(grid.x.coord(i) - det.x);
    double g2 = 0.0;
    if (shape == DetectorShape::Box) {
      g2 = peak * std::clamp((det.width - r) / dx + 0.5, 0.0, 1.0);
    } else if (r <= 5.0 * det.width) {
      g2 = peak * std::exp(-r * r / (det.width * det.width));
    }
    g[i] = std::sqrt(g2);
  }
  return g;
}

TunnelModel build_tunnel_model(const TunnelSetup& setup, const Units& units) {
  const auto& n = setup.numerics;
  const auto& p = setup.packet;
  if (!(n.dx > 0.0) || !(n.dt > 0.0) || !(n.t_cut > 0.0)) throw std::invalid_argument("dx, dt and t_cut must be positive");
  if (!(setup.d1.width > 0.0) || !(setup.d2.width > 0.0)) throw std::invalid_argument("detector widths must be positive");
  if (setup.d1.w0 < 0.0 || setup.d2.w0 < 0.0) throw std::invalid_argument("detector strengths must be non-negative");
  if (setup.barrier.d < 0.0) throw std::invalid_argument("barrier width must be non-negative");
  if (!(p.eta > 0.0) || !(p.e0 > 0.0)) throw std::invalid_argument("packet width and energy must be positive");
  if (!(p.x0 < setup.d1.x) || !(setup.d1.x < 0.0)) throw std::invalid_argument("need x0 < x1 < 0");
  if (setup.d2.x < setup.barrier.d) throw std::invalid_argument("detector D2 must lie behind the barrier");
  const double k0 = std::sqrt(p.e0 / units.hbar2_over_2m);
  if (k0 * n.dx >= 1.0) throw std::invalid_argument("packet momentum not resolved on the grid (k0 dx >= 1)");

  const double ext1 = detector_extent(setup.d1, n.shape, n.dx);
  const double ext2 = detector_extent(setup.d2, n.shape, n.dx);
  if (p.x0 + n.packet_span * p.eta > setup.d1.x - ext1)
    throw std::invalid_argument("initial packet overlaps detector D1");
  const double pad = n.margin + (n.absorber_strength > 0.0 ? n.absorber_length : 0.0);
  const double lo = std::min(setup.d1.x - ext1, 0.0) - pad;
  const double hi = std::max(setup.d2.x + ext2, setup.barrier.d) + pad;

  TunnelModel tm;
  tm.setup = setup;
  tm.primed_grid = aligned_grid(lo, hi, n.dx);
  tm.wait_grid = aligned_grid(std::min(lo, p.x0 - n.packet_span * p.eta - pad), hi, n.dx);

  ModelSpec spec;
  spec.units = units;
  spec.labels = {"WAIT", "PRIMED", "REFL", "TRANS", "ESCAPED"};
  spec.spaces = {tm.wait_grid, tm.primed_grid, tm.primed_grid, tm.primed_grid, tm.wait_grid};
  const RealVector vw = barrier_potential(tm.wait_grid, setup.barrier);
  const RealVector vp = barrier_potential(tm.primed_grid, setup.barrier);
  spec.hamiltonians = {vw, vp, vp, vp, vw};

  const auto g1w = profile_from(tm.wait_grid, detector_profile(setup.d1, n.shape, tm.wait_grid, units));
  const auto g1p = profile_from(tm.primed_grid, detector_profile(setup.d1, n.shape, tm.primed_grid, units));
  const auto g2p = profile_from(tm.primed_grid, detector_profile(setup.d2, n.shape, tm.primed_grid, units));
  const Position at1{setup.d1.x, 0.0}, at2{setup.d2.x, 0.0};
  spec.jumps.push_back({tm.wait, tm.primed, g1w, at1});
  spec.jumps.push_back({tm.primed, tm.refl, g1p, at1});
  spec.jumps.push_back({tm.primed, tm.trans, g2p, at2});
  if (n.absorber_strength > 0.0) {
    spec.jumps.push_back({tm.wait, tm.escaped,
                          profile_from(tm.wait_grid, absorber_profile(tm.wait_grid, n.absorber_length, n.absorber_strength)),
                          std::nullopt});
    spec.jumps.push_back(
        {tm.primed, tm.escaped,
         profile_from(tm.primed_grid, absorber_profile(tm.primed_grid, n.absorber_length, n.absorber_strength)),
         std::nullopt});
  }
  tm.model = std::make_shared<const HybridModel>(build_model(std::move(spec)));
  tm.initial = make_state(*tm.model, tm.wait, packet_state(tm.wait_grid, p, units));
  return tm;
}

TunnelOutcome classify(const TunnelModel& tm, const TrajectoryRecord& record) {
  TunnelOutcome o;
  o.t0 = kNaN;
  o.t_end = kNaN;
  for (const auto& e : record.events) {
    if (e.from == tm.wait && e.to == tm.primed) {
      o.t0 = e.time;
      o.kind = OutcomeKind::OneEventOnly;
    } else if (e.from == tm.primed && (e.to == tm.refl || e.to == tm.trans)) {
      o.t_end = e.time;
      o.kind = e.to == tm.refl ? OutcomeKind::Reflected : OutcomeKind::Transmitted;
    }
  }
  return o;
}

TunnelStats run_tunnel_experiment(const TunnelModel& tm, int n, std::uint64_t master_seed, int workers,
                                  std::vector<TunnelOutcome>* outcomes) {
  if (n < 1) throw std::invalid_argument("need at least one trajectory");
  PdpEngine engine(tm.model, tm.setup.numerics.dt);
  EnsembleOptions opt;
  opt.workers = workers;
  opt.keep_records = true;
  const auto ens = run_ensemble(engine, tm.initial, tm.setup.numerics.t_cut, {tm.refl, tm.trans, tm.escaped}, n,
                                master_seed, nullptr, opt);
  TunnelStats s;
  s.n = n;
  std::vector<double> tr, tt;
  if (outcomes) outcomes->clear();
  for (const auto& r : ens.records) {
    const auto o = classify(tm, r);
    switch (o.kind) {
      case OutcomeKind::Reflected: tr.push_back(o.duration()); break;
      case OutcomeKind::Transmitted: tt.push_back(o.duration()); break;
      case OutcomeKind::NoFirstEvent: ++s.no_first_event; break;
      case OutcomeKind::OneEventOnly: ++s.one_event_only; break;
    }
    if (outcomes) outcomes->push_back(o);
  }
  s.reflected = static_cast<int>(tr.size());
  s.transmitted = static_cast<int>(tt.size());
  s.tau_r = summarize(tr);
  s.tau_t = summarize(tt);
  return s;
}

Scattering transmission_amplitude(double e, const Barrier& b, const Units& units) {
  const auto dn = denominator(e, b, units);
  Scattering s;
  s.t = 1.0 / dn.d;
  s.r = cplx(0.0, 1.0) * (dn.u - dn.k * dn.k) * dn.cs.s / (2.0 * dn.k * dn.d);
  return s;
}

double phase_derivative(double e, const Barrier& b, const Units& units) {
  const auto dn = denominator(e, b, units);
  return -(dn.d_e / dn.d).imag();
}

LarmorTimes larmor_components(double e, const Barrier& b, const Units& units) {
  const auto dn = denominator(e, b, units);
  const cplx ratio = dn.d_v / dn.d;
  return {units.hbar * ratio.imag(), units.hbar * ratio.real()};
}

double free_flight_time(double e, double length, const Units& units) {
  if (!(e > 0.0)) throw std::invalid_argument("energy must be positive");
  const double k = std::sqrt(e / units.hbar2_over_2m);
  return length * units.hbar / (2.0 * units.hbar2_over_2m * k);
}

double phase_time(double e, const Barrier& b, double x1, double x2, const Units& units) {
  return units.hbar * phase_derivative(e, b, units) + free_flight_time(e, x2 - x1 - b.d, units);
}

double semiclassical_time(double e, const Barrier& b, double x1, double x2, const Units& units) {
  if (!(e > 0.0)) throw std::invalid_argument("energy must be positive");
  if (std::abs(e - b.v0) <= 1e-12 * std::max(e, std::abs(b.v0)))
    throw std::domain_error("semiclassical time diverges at E = V0");
  const double c = units.hbar2_over_2m;
  const double q = std::sqrt(std::abs(e - b.v0) / c);  // q above the barrier, kappa below
  return free_flight_time(e, x2 - x1 - b.d, units) + b.d * units.hbar / (2.0 * c * q);
}

double buttiker_larmor_time(double e, const Barrier& b, const Units& units) {
  const auto l = larmor_components(e, b, units);
  return std::hypot(l.tau_y, l.tau_z);
}

double buttiker_larmor_traversal(double e, const Barrier& b, double x1, double x2, const Units& units) {
  return buttiker_larmor_time(e, b, units) + free_flight_time(e, x2 - x1 - b.d, units);
}

PacketAverage packet_average(const std::function<double(double)>& clock, const TunnelPacket& packet, Weighting w,
                             const Barrier& b, const Units& units, const PacketAverageOptions& opt) {
  if (!(packet.eta > 0.0) || !(packet.e0 > 0.0)) throw std::invalid_argument("packet width and energy must be positive");
  const double c = units.hbar2_over_2m;
  const double k0 = std::sqrt(packet.e0 / c);
  const double sk = 1.0 / (2.0 * packet.eta);
  const double lo = std::max(k0 - opt.span_sigma * sk, 1e-6 * k0);
  const double hi = k0 + opt.span_sigma * sk;
  const int m = opt.points | 1;
  const double h = (hi - lo) / (m - 1);
  std::vector<double> weight(static_cast<size_t>(m)), weighted(static_cast<size_t>(m)), kept(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double k = lo + i * h;
    const double e = c * k * k;
    double wt = std::exp(-2.0 * packet.eta * packet.eta * (k - k0) * (k - k0));
    if (w == Weighting::Transmitted) wt *= std::norm(transmission_amplitude(e, b, units).t);
    weight[static_cast<size_t>(i)] = wt;
    const bool skip = opt.singular_energy >= 0.0 && std::abs(e - opt.singular_energy) < opt.exclusion;
    kept[static_cast<size_t>(i)] = skip ? 0.0 : wt;
    weighted[static_cast<size_t>(i)] = skip ? 0.0 : wt * clock(e);
  }
  const double total = simpson(weight, h);
  const double in = simpson(kept, h);
  if (!(total > 0.0) || !(in > 0.0)) throw std::domain_error("packet weights vanish");
  PacketAverage out;
  out.value = simpson(weighted, h) / in;
  out.excluded_weight = 1.0 - in / total;
  return out;
}

ScanRow comparison_clocks(const TunnelSetup& setup, const Units& units) {
  ScanRow row;
  const auto& b = setup.barrier;
  const double x1 = setup.d1.x, x2 = setup.d2.x, e0 = setup.packet.e0;
  auto guarded = [](auto&& f) {
    try {
      return f();
    } catch (const std::domain_error&) {
      return kNaN;
    }
  };
  row.phase_plane = phase_time(e0, b, x1, x2, units);
  row.larmor_plane = buttiker_larmor_traversal(e0, b, x1, x2, units);
  row.phase_packet = guarded([&] {
    return packet_average([&](double e) { return phase_time(e, b, x1, x2, units); }, setup.packet,
                          Weighting::Transmitted, b, units)
        .value;
  });
  row.larmor_packet = guarded([&] {
    return packet_average([&](double e) { return buttiker_larmor_traversal(e, b, x1, x2, units); }, setup.packet,
                          Weighting::Transmitted, b, units)
        .value;
  });
  row.semiclassical_packet = guarded([&] {
    PacketAverageOptions opt;
    opt.singular_energy = b.v0;
    opt.exclusion = 1e-3 * std::max(1.0, b.v0);
    return packet_average([&](double e) { return semiclassical_time(e, b, x1, x2, units); }, setup.packet,
                          Weighting::Transmitted, b, units, opt)
        .value;
  });
  return row;
}

std::vector<ScanRow> run_scan(TunnelSetup base, ScanParameter what, const std::vector<double>& values, int n,
                              std::uint64_t master_seed, int workers, double d2_offset, const Units& units,
                              std::vector<std::vector<TunnelOutcome>>* outcomes) {
  std::vector<ScanRow> rows;
  if (outcomes) outcomes->assign(values.size(), {});
  for (size_t i = 0; i < values.size(); ++i) {
    TunnelSetup s = base;
    if (what == ScanParameter::Width) {
      s.barrier.d = values[i];
      s.d2.x = values[i] + d2_offset;
    } else {
      s.barrier.v0 = values[i];
    }
    const auto tm = build_tunnel_model(s, units);
    ScanRow row = comparison_clocks(s, units);
    row.value = values[i];
    row.stats = run_tunnel_experiment(tm, n, split_seed(master_seed, i), workers, outcomes ? &(*outcomes)[i] : nullptr);
    rows.push_back(row);
  }
  return rows;
}

namespace {

double combined_se(const TimeStat& a, const TimeStat& b) { return std::sqrt(a.se * a.se + b.se * b.se); }

}  // namespace

WidthTrendCheck check_width_trend(const std::vector<ScanRow>& rows, double min_r2) {
  WidthTrendCheck c;
  if (rows.size() < 2) return c;
  c.increasing = true;
  c.min_step_sigma = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto& a = rows[i].stats.tau_t;
    const auto& b = rows[i + 1].stats.tau_t;
    const double z = (b.mean - a.mean) / combined_se(a, b);
    if (!(z > 1.0)) c.increasing = false;
    c.min_step_sigma = std::isnan(z) ? kNaN : std::min(c.min_step_sigma, z);
  }
  const double n = static_cast<double>(rows.size());
  double sx = 0, sy = 0;
  for (const auto& r : rows) sx += r.value, sy += r.stats.tau_t.mean;
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& r : rows) {
    const double dx = r.value - mx, dy = r.stats.tau_t.mean - my;
    sxx += dx * dx, sxy += dx * dy, syy += dy * dy;
  }
  c.r_squared = syy > 0.0 && sxx > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
  c.pass = c.increasing && c.r_squared >= min_r2;
  return c;
}

HeightPeakCheck check_height_peak(const std::vector<ScanRow>& rows, double lo, double hi) {
  HeightPeakCheck c;
  if (rows.size() < 2) return c;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows)
    if (r.stats.tau_t.mean > best) best = r.stats.tau_t.mean, c.argmax = r.value;
  const auto& first = rows.front().stats.tau_t;
  const auto& last = rows.back().stats.tau_t;
  c.drop_sigma = (first.mean - last.mean) / combined_se(first, last);
  c.peak_in_window = std::isfinite(best) && c.argmax >= lo && c.argmax <= hi;
  c.last_below_first = c.drop_sigma > 1.0;
  c.pass = c.peak_in_window && c.last_below_first;
  return c;
}

}  // namespace eeqt
