#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

#include "eeqt/pdp_engine.hpp"
#include "eeqt/rng.hpp"
#include "test_support.hpp"

using namespace eeqt;
using namespace eeqt::test;

namespace {

std::shared_ptr<const HybridModel> decay_model(double lambda, const Matrix& h = Matrix::Zero(2, 2)) {
  return finite_model({h, Matrix::Zero(2, 2)}, {{0, 1, std::sqrt(lambda) * Matrix::Identity(2, 2)}});
}

HybridPureState up(const HybridModel& m) {
  Vector v(2);
  v << 1, 0;
  return make_state(m, 0, v);
}

bool same_records(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  if (a.events.size() != b.events.size() || a.terminated_by != b.terminated_by || a.end_time != b.end_time)
    return false;
  for (size_t i = 0; i < a.events.size(); ++i) {
    const auto& x = a.events[i];
    const auto& y = b.events[i];
    if (x.time != y.time || x.from != y.from || x.to != y.to || x.pre_jump_norm2 != y.pre_jump_norm2) return false;
  }
  return a.final_state.label == b.final_state.label && a.final_state.psi == b.final_state.psi;
}

}  // namespace

TEST_CASE("unitary steps preserve the norm") {
  std::mt19937_64 gen(1);
  auto m = finite_model({random_hermitian(gen, 4)}, {});
  HybridPureState s = make_state(*m, 0, random_state(gen, 4));
  for (int k = 0; k < 100; ++k) {
    const auto next = evolve_continuous(*m, s, 0.01);
    CHECK(std::abs(next.norm2 - s.norm2) < 1e-12);
    s = next;
  }
}

TEST_CASE("pure damping decays the norm exponentially") {
  const double lambda = 1.0;
  const double dt = 1e-4;
  auto m = decay_model(lambda);
  PdpEngine engine(m, dt);
  Vector psi = up(*m).psi;
  for (int k = 0; k < 1000; ++k) engine.advance(0, psi, dt);
  const double expected = std::exp(-lambda * 1000 * dt);
  CHECK(std::abs(psi.squaredNorm() - expected) / expected < 1e-8);
}

TEST_CASE("one Crank-Nicolson step matches the exponential to third order") {
  const double omega = 2.0;
  Matrix h = 0.5 * omega * pauli_z();
  auto m = finite_model({h}, {});
  Vector psi(2);
  psi << 1, 1;
  psi.normalize();
  const double hbar = m->units().hbar;
  for (double dt : {0.02, 0.01}) {
    const auto out = evolve_continuous(*m, make_state(*m, 0, psi), dt);
    const Matrix u = (cplx(0, -dt / hbar) * h).exp();
    const double err = (out.psi - u * psi).norm();
    const double x = omega * dt / hbar;
    CHECK(err < 0.1 * x * x * x);
  }
}

TEST_CASE("norm decrease per step follows the damping rate") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = finite_model({random_hermitian(gen, 2), Matrix::Zero(2, 2)}, {{0, 1, random_matrix(gen, 2)}});
    PdpEngine engine(m, 1e-3);
    const double kn = std::get<Matrix>(effective_generator(*m, 0)).operatorNorm();
    const double bound = std::pow(kn * 1e-3, 3);
    Vector psi = random_state(gen, 2);
    for (int k = 0; k < 20; ++k) {
      const double ra = damping_rate(*m, 0, psi);
      const double na = psi.squaredNorm();
      engine.advance(0, psi, 1e-3);
      const double rb = damping_rate(*m, 0, psi);
      const double nb = psi.squaredNorm();
      CHECK(nb <= na);
      CHECK(std::abs((na - nb) - 0.5e-3 * (ra + rb)) < bound);
    }
  }
}

TEST_CASE("jump time inverts the exponential survival law") {
  const double lambda = 0.8;
  auto m = decay_model(lambda);
  PdpEngine engine(m, 1e-3);
  for (double p : {0.1, 0.5, 0.9}) {
    const auto jt = engine.sample_jump_time(up(*m), p, 0.0, 100.0);
    REQUIRE(jt.has_value());
    const double expected = -std::log(1.0 - p) / lambda;
    CHECK(std::abs(jt->time - expected) / expected < 1e-6);
    CHECK(jt->norm2 == doctest::Approx(1.0 - p).epsilon(1e-6));
  }
  const auto tiny = engine.sample_jump_time(up(*m), 1e-9, 2.0, 100.0);
  REQUIRE(tiny.has_value());
  CHECK(tiny->time - 2.0 < 1e-3);
  CHECK(!engine.sample_jump_time(up(*m), 0.99, 0.0, 1.0).has_value());

  auto free = finite_model({pauli_z()}, {});
  PdpEngine free_engine(free, 1e-2);
  Vector v(2);
  v << 1, 0;
  CHECK(!free_engine.sample_jump_time(make_state(*free, 0, v), 0.5, 0.0, 10.0).has_value());
}

TEST_CASE("jump targets follow the inverse CDF in declaration order") {
  Matrix g1 = Matrix::Zero(2, 2);
  g1(0, 0) = 1.0;
  Matrix g2 = Matrix::Zero(2, 2);
  g2(1, 1) = 1.0;
  const Matrix z = Matrix::Zero(2, 2);
  auto m = finite_model({z, z, z}, {{0, 1, g1}, {0, 2, g2}});
  PdpEngine engine(m, 0.01);
  Vector psi(2);
  psi << std::sqrt(0.25), std::sqrt(0.75);
  CHECK(engine.sample_jump_target(0, psi, 0.0).label == 1);
  CHECK(engine.sample_jump_target(0, psi, 0.2499).label == 1);
  CHECK(engine.sample_jump_target(0, psi, 0.2501).label == 2);
  const auto t = engine.sample_jump_target(0, psi, 0.9);
  CHECK(t.psi.norm() == doctest::Approx(1.0));
  Vector only(2);
  only << 1, 0;
  CHECK(engine.sample_jump_target(0, only, 0.999).label == 1);
  CHECK_THROWS_AS(engine.sample_jump_target(1, only, 0.5), NumericalError);
}

TEST_CASE("Lambda = 0 produces no events") {
  auto m = finite_model({pauli_x()}, {});
  PdpEngine engine(m, 0.01);
  Vector v(2);
  v << 1, 0;
  const auto rec = engine.run_trajectory(make_state(*m, 0, v), 1.0, {}, 42);
  CHECK(rec.events.empty());
  CHECK(rec.terminated_by == Termination::TimeCut);
  CHECK(rec.end_time == 1.0);
}

TEST_CASE("trajectories are deterministic and cache-independent") {
  std::mt19937_64 gen(11);
  auto m = finite_model({random_hermitian(gen, 2), random_hermitian(gen, 2), random_hermitian(gen, 2)},
                        {{0, 1, random_matrix(gen, 2, 0.5)}, {1, 0, random_matrix(gen, 2, 0.5)},
                         {1, 2, random_matrix(gen, 2, 0.3)}});
  PdpEngine engine(m, 0.003);
  const auto init = make_state(*m, 0, random_state(gen, 2));
  const double t_cut = 1.4142;  // deliberately off the step grid
  const auto a = engine.run_trajectory(init, t_cut, {2}, 99);
  const auto b = engine.run_trajectory(init, t_cut, {2}, 99);
  CHECK(same_records(a, b));

  EnsembleOptions direct;
  direct.keep_records = true;
  direct.keep_final_psi = true;
  direct.use_prefix_cache = false;
  EnsembleOptions cached = direct;
  cached.use_prefix_cache = true;
  EnsembleOptions threaded = cached;
  threaded.workers = 3;
  const auto s1 = run_ensemble(engine, init, t_cut, {2}, 60, 5, nullptr, direct);
  const auto s2 = run_ensemble(engine, init, t_cut, {2}, 60, 5, nullptr, cached);
  const auto s3 = run_ensemble(engine, init, t_cut, {2}, 60, 5, nullptr, threaded);
  REQUIRE(s1.records.size() == 60);
  int events = 0;
  for (size_t i = 0; i < 60; ++i) {
    CHECK(same_records(s1.records[i], s2.records[i]));
    CHECK(same_records(s1.records[i], s3.records[i]));
    events += static_cast<int>(s1.records[i].events.size());
  }
  CHECK(events > 20);
  CHECK(s1.outcome_counts == s3.outcome_counts);

  const auto single = run_ensemble(engine, init, t_cut, {2}, 1, 5, nullptr, direct);
  CHECK(same_records(single.records[0], engine.run_trajectory(init, t_cut, {2}, split_seed(5, 0))));
}

TEST_CASE("event times are strictly increasing and follow the jump graph") {
  std::mt19937_64 gen(5);
  auto m = finite_model({random_hermitian(gen, 2), random_hermitian(gen, 2)},
                        {{0, 1, random_matrix(gen, 2)}, {1, 0, random_matrix(gen, 2)}});
  PdpEngine engine(m, 0.01);
  const auto rec = engine.run_trajectory(make_state(*m, 0, random_state(gen, 2)), 20.0, {}, 3);
  REQUIRE(rec.events.size() > 5);
  for (size_t i = 0; i < rec.events.size(); ++i) {
    CHECK(rec.events[i].from != rec.events[i].to);
    if (i > 0) {
      CHECK(rec.events[i].time > rec.events[i - 1].time);
      CHECK(rec.events[i].from == rec.events[i - 1].to);
    }
  }
}

TEST_CASE("waiting times pass a Kolmogorov-Smirnov test against Exp(lambda)") {
  const double lambda = 2.0;
  auto m = decay_model(lambda, pauli_z());
  PdpEngine engine(m, 2e-3);
  EnsembleOptions opt;
  opt.keep_records = true;
  const int n = 100000;
  const auto stats = run_ensemble(engine, up(*m), 15.0, {1}, n, 2024, nullptr, opt);
  std::vector<double> t;
  for (const auto& r : stats.records) {
    REQUIRE(r.events.size() == 1);
    t.push_back(r.events[0].time);
  }
  std::sort(t.begin(), t.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = 1.0 - std::exp(-lambda * t[static_cast<size_t>(i)]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  CHECK(d * std::sqrt(static_cast<double>(n)) < 1.628);
  CHECK(stats.outcome_times.at("L1").mean == doctest::Approx(1.0 / lambda).epsilon(0.02));
}

TEST_CASE("summarize reports mean and standard error") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(v);
  CHECK(s.count == 4);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
}
