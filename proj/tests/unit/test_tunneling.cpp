#include <doctest.h>

#include <cmath>

#include "eeqt/tunneling.hpp"

using namespace eeqt;

namespace {

const Units kU{};

double k_of(double e) { return std::sqrt(e / kU.hbar2_over_2m); }

/// Short setup for simulation tests: packet close to D1, short horizon.
TunnelSetup quick_setup(double v0, double d) {
  TunnelSetup s;
  s.barrier = {v0, d};
  s.d2.x = d + 5.0;
  s.packet.x0 = -130.0;
  s.numerics.t_cut = 40.0;
  return s;
}

const RealVector& diag(const HybridModel& m, int label) { return std::get<RealVector>(m.lambda(label)); }

}  // namespace

TEST_CASE("plane-wave scattering is unitary") {
  for (double v0 : {0.0, 2.0, 5.0, 10.0, 15.0})
    for (double d : {0.0, 3.0, 10.0, 40.0})
      for (double e : {0.5, 4.99, 5.0, 5.01, 9.999999, 10.0, 10.000001, 20.0}) {
        const auto s = transmission_amplitude(e, {v0, d}, kU);
        CHECK(std::abs(std::norm(s.t) + std::norm(s.r) - 1.0) < 1e-12);
      }
  CHECK_THROWS_AS(transmission_amplitude(0.0, {10.0, 5.0}, kU), std::invalid_argument);
}

TEST_CASE("free propagation gives T = exp(ikd)") {
  const double e = 5.0, d = 7.0;
  const auto s = transmission_amplitude(e, {0.0, d}, kU);
  CHECK(std::abs(s.t - std::polar(1.0, k_of(e) * d)) < 1e-13);
  CHECK(std::abs(s.r) < 1e-13);
}

TEST_CASE("opaque barriers follow the WKB-like asymptote") {
  const double e = 5.0, v0 = 10.0, d = 20.0;
  const double k = k_of(e), kappa = k_of(v0 - e);
  const double expected = 16.0 * k * k * kappa * kappa / std::pow(k * k + kappa * kappa, 2) * std::exp(-2.0 * kappa * d);
  const double got = std::norm(transmission_amplitude(e, {v0, d}, kU).t);
  CHECK(std::abs(got / expected - 1.0) < 1e-6);
}

TEST_CASE("analytic derivatives match finite differences") {
  for (const Barrier b : {Barrier{10.0, 5.0}, Barrier{10.0, 40.0}, Barrier{4.0, 10.0}, Barrier{5.5, 3.0}}) {
    for (double e : {2.0, 5.0, 7.0}) {
      if (std::abs(e - b.v0) < 1e-3) continue;
      const double h = 1e-5;
      auto arg_t = [&](double ee, double vv) { return std::arg(transmission_amplitude(ee, {vv, b.d}, kU).t); };
      auto ln_t = [&](double ee, double vv) { return std::log(std::abs(transmission_amplitude(ee, {vv, b.d}, kU).t)); };
      auto unwrap = [](double a) { return std::remainder(a, 2.0 * M_PI); };
      const double fd_e = unwrap(arg_t(e + h, b.v0) - arg_t(e - h, b.v0)) / (2 * h);
      CHECK(std::abs(phase_derivative(e, b, kU) / fd_e - 1.0) < 1e-6);
      const auto lt = larmor_components(e, b, kU);
      const double fd_y = -kU.hbar * unwrap(arg_t(e, b.v0 + h) - arg_t(e, b.v0 - h)) / (2 * h);
      const double fd_z = -kU.hbar * (ln_t(e, b.v0 + h) - ln_t(e, b.v0 - h)) / (2 * h);
      CHECK(std::abs(lt.tau_y / fd_y - 1.0) < 1e-6);
      CHECK(std::abs(lt.tau_z / fd_z - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("phase time saturates for opaque barriers") {
  const double t20 = kU.hbar * phase_derivative(5.0, {10.0, 20.0}, kU);
  const double t40 = kU.hbar * phase_derivative(5.0, {10.0, 40.0}, kU);
  CHECK(std::abs(t40 / t20 - 1.0) < 0.05);
  // Free flight over the same length keeps growing.
  CHECK(free_flight_time(5.0, 40.0, kU) / free_flight_time(5.0, 20.0, kU) == doctest::Approx(2.0));
}

TEST_CASE("all clocks reduce to free flight without a barrier") {
  const Barrier b{0.0, 10.0};
  const double x1 = -12.5, x2 = 15.0;
  for (double e : {1.0, 5.0, 12.0}) {
    const double free = free_flight_time(e, x2 - x1, kU);
    CHECK(std::abs(phase_time(e, b, x1, x2, kU) / free - 1.0) < 1e-9);
    CHECK(std::abs(semiclassical_time(e, b, x1, x2, kU) / free - 1.0) < 1e-9);
    CHECK(std::abs(buttiker_larmor_traversal(e, b, x1, x2, kU) / free - 1.0) < 1e-9);
  }
}

TEST_CASE("semiclassical time diverges at the barrier top") {
  const Barrier b{10.0, 5.0};
  const double x1 = -12.5, x2 = 10.0;
  CHECK_THROWS_AS(semiclassical_time(10.0, b, x1, x2, kU), std::domain_error);
  const double base = semiclassical_time(5.0, b, x1, x2, kU);
  CHECK(semiclassical_time(10.0 - 1e-6, b, x1, x2, kU) > 100.0 * base);
  CHECK(semiclassical_time(10.0 + 1e-6, b, x1, x2, kU) > 100.0 * base);
  double prev = 0.0;
  for (double e = 9.0; e < 9.999; e += 0.1) {
    const double t = semiclassical_time(e, b, x1, x2, kU);
    CHECK(t > prev);
    prev = t;
  }
  prev = 1e300;
  for (double e = 10.001; e < 11.0; e += 0.1) {
    const double t = semiclassical_time(e, b, x1, x2, kU);
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("packet averages are normalized and reduce to the plane wave for narrow spectra") {
  const Barrier b{10.0, 5.0};
  TunnelPacket p;
  for (auto w : {Weighting::Momentum, Weighting::Transmitted})
    CHECK(packet_average([](double) { return 1.0; }, p, w, b, kU).value == doctest::Approx(1.0).epsilon(1e-12));
  p.eta = 2000.0;
  auto clock = [&](double e) { return phase_time(e, b, -12.5, 10.0, kU); };
  const double plane = clock(p.e0);
  CHECK(std::abs(packet_average(clock, p, Weighting::Momentum, b, kU).value / plane - 1.0) < 1e-3);
  CHECK(std::abs(packet_average(clock, p, Weighting::Transmitted, b, kU).value / plane - 1.0) < 1e-3);
  // Exclusion window removes weight only near the singular energy.
  PacketAverageOptions opt;
  opt.singular_energy = 10.0;
  opt.exclusion = 0.01;
  CHECK(packet_average(clock, TunnelPacket{}, Weighting::Momentum, b, kU, opt).excluded_weight < 1e-3);
  opt.singular_energy = 5.0;
  CHECK(packet_average(clock, TunnelPacket{}, Weighting::Momentum, b, kU, opt).excluded_weight > 1e-3);
}

TEST_CASE("damping operators follow the detector layout") {
  TunnelSetup s = quick_setup(10.0, 5.0);
  s.numerics.absorber_strength = 0.0;
  const auto tm = build_tunnel_model(s, kU);
  const auto& m = *tm.model;
  const auto g1 = detector_profile(s.d1, s.numerics.shape, tm.primed_grid, kU);
  const auto g2 = detector_profile(s.d2, s.numerics.shape, tm.primed_grid, kU);
  const RealVector primed = diag(m, tm.primed);
  CHECK((primed - (g1.array().square() + g2.array().square()).matrix()).norm() < 1e-12);
  CHECK(diag(m, tm.refl).norm() == 0.0);
  CHECK(diag(m, tm.trans).norm() == 0.0);
  const RealVector wait = diag(m, tm.wait);
  CHECK(wait.maxCoeff() == doctest::Approx(s.d1.w0 / kU.hbar).epsilon(1e-12));
  Eigen::Index at = 0;
  wait.maxCoeff(&at);
  CHECK(std::abs(tm.wait_grid.x.coord(static_cast<int>(at)) - s.d1.x) <= s.d1.width);
  // D2 does not reach into the WAIT label, D1 ends before the barrier.
  for (int i = 0; i < tm.wait_grid.nx(); ++i)
    if (tm.wait_grid.x.coord(i) > 0.5 * s.numerics.dx) CHECK(wait[i] == 0.0);
  CHECK(tm.primed_grid.x.spacing() == doctest::Approx(s.numerics.dx));
  CHECK(tm.wait_grid.x.min < s.packet.x0 - s.numerics.packet_span * s.packet.eta);
}

TEST_CASE("invalid layouts are rejected") {
  TunnelSetup s = quick_setup(10.0, 5.0);
  auto bad = [&](auto&& edit) {
    TunnelSetup t = s;
    edit(t);
    CHECK_THROWS_AS(build_tunnel_model(t, kU), std::invalid_argument);
  };
  bad([](TunnelSetup& t) { t.d1.x = 1.0; });
  bad([](TunnelSetup& t) { t.d2.x = 2.0; });
  bad([](TunnelSetup& t) { t.packet.x0 = -40.0; });
  bad([](TunnelSetup& t) { t.numerics.dx = 1.0; });
  bad([](TunnelSetup& t) { t.d1.width = 0.0; });
  bad([](TunnelSetup& t) { t.d2.w0 = -1.0; });
}

TEST_CASE("a silent second detector never reports transmission") {
  TunnelSetup s = quick_setup(10.0, 3.0);
  s.d2.w0 = 0.0;
  const auto stats = run_tunnel_experiment(build_tunnel_model(s, kU), 200, 7);
  CHECK(stats.transmitted == 0);
  CHECK(stats.reflected > 0);
}

TEST_CASE("events are ordered and censoring shrinks with the horizon") {
  TunnelSetup s = quick_setup(10.0, 3.0);
  double prev = 2.0;
  for (double t_cut : {12.0, 20.0, 40.0}) {
    s.numerics.t_cut = t_cut;
    std::vector<TunnelOutcome> out;
    const auto stats = run_tunnel_experiment(build_tunnel_model(s, kU), 300, 11, 1, &out);
    CHECK(stats.reflected + stats.transmitted + stats.no_first_event + stats.one_event_only == stats.n);
    for (const auto& o : out) {
      if (o.kind == OutcomeKind::Reflected || o.kind == OutcomeKind::Transmitted) {
        CHECK(o.t0 > 0.0);
        CHECK(o.t_end > o.t0);
        CHECK(o.t_end <= t_cut);
      }
    }
    CHECK(stats.censored_fraction() <= prev);
    prev = stats.censored_fraction();
  }
}

TEST_CASE("without a barrier the traversal time is the free flight") {
  TunnelSetup s = quick_setup(0.0, 5.0);
  const auto stats = run_tunnel_experiment(build_tunnel_model(s, kU), 400, 3);
  REQUIRE(stats.transmitted > 50);
  const double v = 2.0 * kU.hbar2_over_2m * k_of(s.packet.e0) / kU.hbar;
  const double free = (s.d2.x - s.d1.x) / v;
  CHECK(std::abs(stats.tau_t.mean / free - 1.0) < 0.2);
}

TEST_CASE("scans are reproducible") {
  TunnelSetup s = quick_setup(10.0, 3.0);
  const auto a = run_scan(s, ScanParameter::Width, {3.0, 5.0}, 60, 5);
  const auto b = run_scan(s, ScanParameter::Width, {3.0, 5.0}, 60, 5);
  REQUIRE(a.size() == 2);
  CHECK(a[1].value == 5.0);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(a[i].stats.reflected == b[i].stats.reflected);
    CHECK(a[i].stats.transmitted == b[i].stats.transmitted);
    CHECK(a[i].stats.tau_r.mean == b[i].stats.tau_r.mean);
  }
  CHECK(a[1].larmor_plane > a[0].larmor_plane);
}
