#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "eeqt/cloud_chamber.hpp"
#include "eeqt/rng.hpp"

using namespace eeqt;

namespace {

GridSpace line(double lo, double hi, int n) {
  GridSpace g;
  g.x = {lo, hi, n};
  return g;
}

CloudChamber dense_chamber(double lambda = 4.0) {
  const auto grid = line(-30.0, 30.0, 241);
  MediumConfig mc;
  mc.width = 1.0;
  mc.pitch = 0.5;
  mc.lambda = lambda;
  return build_cloud_chamber(make_medium(mc, grid), grid);
}

}  // namespace

TEST_CASE("lattice Lambda is close to lambda/2 away from the edges") {
  const auto grid = line(-20.0, 20.0, 161);
  MediumConfig mc;
  mc.width = 2.0;
  mc.lambda = 3.0;
  const auto c = build_cloud_chamber(make_medium(mc, grid), grid);
  const auto& lam = std::get<RealVector>(c.model->lambda(c.even));
  for (int i = 0; i < grid.size(); ++i) {
    const double x = grid.x.coord(i);
    CHECK(lam[i] >= 0.0);
    if (std::abs(x) < 12.0) CHECK(lam[i] == doctest::Approx(1.5).epsilon(0.1));
  }
}

TEST_CASE("2D lattice Lambda is close to lambda/2 in the interior") {
  GridSpace grid;
  grid.x = {-12.0, 12.0, 49};
  grid.y = Axis{-12.0, 12.0, 49};
  MediumConfig mc;
  mc.width = 2.0;
  mc.lambda = 2.0;
  const auto c = build_cloud_chamber(make_medium(mc, grid), grid);
  const auto& lam = std::get<RealVector>(c.model->lambda(c.even));
  CHECK(lam[24 * 49 + 24] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(lam[20 * 49 + 28] == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("flip distribution is normalized and local") {
  const auto c = dense_chamber();
  const auto psi = gaussian_packet(c.grid, {3.0, 0.0, 2.0, 0.5, 0.0});
  const auto p = flip_position_distribution(c, psi);
  double sum = 0.0;
  for (double v : p) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);

  Vector delta = Vector::Zero(c.grid.size());
  delta[140] = 1.0 / std::sqrt(c.grid.x.spacing());  // x = 5
  MediumConfig narrow;
  narrow.width = 0.05;
  narrow.pitch = c.grid.x.spacing();
  const auto cn = build_cloud_chamber(make_medium(narrow, c.grid), c.grid);
  const auto q = flip_position_distribution(cn, delta);
  const auto top = std::max_element(q.begin(), q.end()) - q.begin();
  CHECK(cn.medium.sites[static_cast<size_t>(top)].x == doctest::Approx(5.0));
  CHECK(q[static_cast<size_t>(top)] > 0.99);
}

TEST_CASE("uniform state gives uniform interior flip weights") {
  const auto c = dense_chamber();
  Vector psi = Vector::Ones(c.grid.size());
  psi /= std::sqrt(norm2_in(c.grid, psi));
  const auto p = flip_position_distribution(c, psi);
  double ref = -1.0;
  for (size_t s = 0; s < p.size(); ++s) {
    if (std::abs(c.medium.sites[s].x) > 20.0) continue;
    if (ref < 0) ref = p[s];
    CHECK(p[s] == doctest::Approx(ref).epsilon(1e-9));
  }
}

TEST_CASE("an uncoupled state cannot choose a flip site") {
  const auto grid = line(-10.0, 10.0, 81);
  MediumConfig mc;
  mc.lambda = 0.0;
  const auto c = build_cloud_chamber(make_medium(mc, grid), grid);
  CHECK_THROWS_AS(flip_position_distribution(c, gaussian_packet(grid, {0, 0, 1, 0, 0})), NumericalError);
}

TEST_CASE("a medium with zero rate records no flips") {
  const auto grid = line(-10.0, 10.0, 81);
  MediumConfig mc;
  mc.lambda = 0.0;
  const auto c = build_cloud_chamber(make_medium(mc, grid), grid);
  PdpEngine engine(c.model, 0.01);
  const auto t = run_track(engine, gaussian_packet(grid, {0, 0, 1, 0.5, 0}), 1.0, 3);
  CHECK(t.flips.empty());
}

TEST_CASE("inter-flip times in a homogeneous medium are exponential with rate lambda/2") {
  const double lambda = 4.0;
  const auto c = dense_chamber(lambda);
  PdpEngine engine(c.model, 2e-3);
  const auto psi = gaussian_packet(c.grid, {0.0, 0.0, 2.0, 0.0, 0.0});
  std::vector<double> waits;
  for (int r = 0; r < 1500; ++r) {
    const auto t = run_track(engine, psi, 2.0, split_seed(99, static_cast<std::uint64_t>(r)));
    double prev = 0.0;
    for (size_t i = 0; i < t.flips.size(); ++i) {
      if (i > 0) CHECK(t.flips[i].time > t.flips[i - 1].time);
      // Waits starting after t_cut - 0.5 are censored below 0.5; skip them.
      if (prev <= 1.5) waits.push_back(t.flips[i].time - prev);
      prev = t.flips[i].time;
    }
  }
  // Compare the distribution conditioned on w < 0.5.
  std::vector<double> w;
  for (double v : waits)
    if (v < 0.5) w.push_back(v);
  std::sort(w.begin(), w.end());
  const double rate = 0.5 * lambda;
  const double norm = 1.0 - std::exp(-rate * 0.5);
  double d = 0.0;
  const double n = static_cast<double>(w.size());
  for (size_t i = 0; i < w.size(); ++i) {
    const double f = (1.0 - std::exp(-rate * w[i])) / norm;
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(n > 2000);
  CHECK(d * std::sqrt(n) < 1.628);
}

TEST_CASE("track angle recovers a straight line") {
  FlipSet f;
  for (int i = 0; i < 6; ++i) f.push_back({0.5 * i, {2.0 * i, 1.0 * i}});
  CHECK(track_angle(f) == doctest::Approx(std::atan2(1.0, 2.0)));
  CHECK_THROWS(track_angle(FlipSet{f[0]}));
}

TEST_CASE("GRW right-hand side: unitary without coupling, trace preserving with it") {
  const auto grid = line(-10.0, 10.0, 41);
  const double dx = grid.x.spacing();
  const auto psi = gaussian_packet(grid, {-3.0, 0.0, 1.0, 1.0, 0.0}) + gaussian_packet(grid, {3.0, 0.0, 1.0, 0.0, 0.0});
  const Vector u = psi / std::sqrt(norm2_in(grid, psi));
  const Matrix rho = u * u.adjoint() * dx;

  MediumConfig off;
  off.lambda = 0.0;
  const auto c0 = build_cloud_chamber(make_medium(off, grid), grid);
  const Matrix r0 = grw_effective_rhs(c0, rho);
  CHECK((r0 - r0.adjoint()).norm() < 1e-12 * (r0.norm() + 1.0));
  CHECK(std::abs(r0.trace()) < 1e-12);

  MediumConfig on;
  on.lambda = 2.0;
  on.width = 1.0;
  const auto c1 = build_cloud_chamber(make_medium(on, grid), grid);
  CHECK(std::abs(grw_effective_rhs(c1, rho).trace()) < 1e-10);
}

TEST_CASE("GRW equation decoheres distant positions and keeps the diagonal") {
  const auto grid = line(-10.0, 10.0, 41);
  MediumConfig mc;
  mc.lambda = 2.0;
  mc.width = 0.5;
  mc.pitch = 0.25;
  Units heavy;  // no kinetic energy
  heavy.hbar2_over_2m = 0.0;
  const auto c = build_cloud_chamber(make_medium(mc, grid), grid, heavy);
  const double dx = grid.x.spacing();
  Vector u = Vector::Zero(grid.size());
  u[10] = u[30] = 1.0 / std::sqrt(2.0 * dx);
  const Matrix rho = u * u.adjoint() * dx;
  const auto out = integrate_grw(c, rho, 1.0, 1e-3, {1.0});
  CHECK(out[0](10, 10).real() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(out[0](30, 30).real() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::abs(out[0](10, 30)) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(0.02));
}

TEST_CASE("first flips follow |psi|^2 for strong short coupling") {
  BornConfig cfg;
  cfg.samples = 20000;
  const auto r = run_born_check(cfg, 5);
  CHECK(r.unflipped_fraction == 0.0);
  CHECK(r.l1 < 0.08);
}

TEST_CASE("ensemble of trajectories matches the GRW equation") {
  GrwCheckConfig cfg;
  cfg.n_points = 32;
  cfg.trajectories = 1000;
  const auto r = run_grw_check(cfg, 11);
  CHECK(r.max_sigma < 5.0);
  CHECK(r.exact.back()[2] < 0.9);  // purity actually decays
}
