#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "eeqt/pdp_engine.hpp"
#include "eeqt/quantum_fractal.hpp"

using namespace eeqt;

namespace {

Vec3 random_unit(std::mt19937_64& gen) {
  std::normal_distribution<double> g;
  return Vec3(g(gen), g(gen), g(gen)).normalized();
}

Spinor random_spinor(std::mt19937_64& gen) {
  std::normal_distribution<double> g;
  return Spinor(cplx(g(gen), g(gen)), cplx(g(gen), g(gen))).normalized();
}

/// p-value of the two-sample chi-square test on cell counts.
double two_sample_p(const std::vector<double>& a, const std::vector<double>& b) {
  double na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
  }
  const double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
  double stat = 0;
  int df = -1;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] + b[i] == 0) continue;
    const double d = ka * a[i] - kb * b[i];
    stat += d * d / (a[i] + b[i]);
    ++df;
  }
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), stat));
}

}  // namespace

TEST_CASE("tetrahedral directions") {
  const auto& n = tetra_directions();
  Vec3 sum = Vec3::Zero();
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(n[i].norm() - 1.0) < 1e-15);
    sum += n[i];
    for (int j = 0; j < i; ++j) CHECK(std::abs(n[i].dot(n[j]) + 1.0 / 3.0) < 1e-15);
  }
  CHECK(sum.norm() < 1e-15);
}

TEST_CASE("IFS maps fix their poles and stay on the sphere") {
  const auto& n = tetra_directions();
  for (int i = 0; i < 4; ++i) {
    CHECK((ifs_map(n[i], i, 0.7) - n[i]).norm() < 1e-15);
    CHECK((ifs_map(-n[i], i, 0.7) + n[i]).norm() < 1e-15);
  }
  const Vec3 r = ifs_map(n[1], 0, 0.5);
  CHECK(std::abs(r.norm() - 1.0) < 1e-15);
  CHECK(r.dot(n[0]) > n[1].dot(n[0]));
  CHECK_THROWS_AS(ifs_map(n[0], 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ifs_map(n[0], 0, 0.0), std::invalid_argument);
}

TEST_CASE("IFS maps are bijections with the sign-flipped inverse") {
  std::mt19937_64 gen(1);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 r = random_unit(gen);
    for (int i = 0; i < 4; ++i) CHECK((ifs_map_inverse(ifs_map(r, i, 0.7), i, 0.7) - r).norm() < 1e-10);
  }
}

TEST_CASE("IFS maps are not contractions near the repelling pole") {
  const auto& n = tetra_directions();
  for (int i = 0; i < 4; ++i) {
    const Vec3 perp = n[i].unitOrthogonal();
    const Vec3 p = (-n[i] + 1e-3 * perp).normalized();
    const Vec3 q = (-n[i] - 1e-3 * perp).normalized();
    CHECK((ifs_map(p, i, 0.7) - ifs_map(q, i, 0.7)).norm() > (p - q).norm());
  }
}

TEST_CASE("IFS probabilities") {
  std::mt19937_64 gen(2);
  for (int k = 0; k < 100000; ++k) {
    const auto p = ifs_probs(random_unit(gen), 0.6);
    CHECK(std::abs(p[0] + p[1] + p[2] + p[3] - 1.0) < 1e-12);
  }
  const auto& n = tetra_directions();
  CHECK(ifs_probs(n[0], 1.0)[0] == doctest::Approx(0.5).epsilon(1e-15));
  const double a = 0.7;
  CHECK(ifs_probs(-n[2], a)[2] == doctest::Approx((1 - a) * (1 - a) / (4 * (1 + a * a))));
}

TEST_CASE("spin jumps realize the IFS") {
  std::mt19937_64 gen(3);
  const double a = 0.7;
  Eigen::Matrix2cd lam = Eigen::Matrix2cd::Zero();
  for (int i = 0; i < 4; ++i) lam += spin_jump_operator(i, a).adjoint() * spin_jump_operator(i, a);
  CHECK((lam - Eigen::Matrix2cd::Identity()).norm() < 1e-15);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Spinor psi = random_spinor(gen);
    const Vec3 r = bloch_vector(psi);
    const auto p = ifs_probs(r, a);
    for (int i = 0; i < 4; ++i) {
      worst = std::max(worst, (bloch_vector(spin_jump_equiv(psi, i, a)) - ifs_map(r, i, a)).norm());
      CHECK(std::abs((spin_jump_operator(i, a) * psi).squaredNorm() - p[static_cast<size_t>(i)]) < 1e-12);
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("spin PDP jump weights match the IFS probabilities") {
  auto m = spin_pdp_model(1.0 - 1e-12);
  PdpEngine engine(m, 0.01);
  const Spinor psi = spinor_from_bloch(tetra_directions()[0]);
  for (int l = 0; l < 16; ++l) CHECK((std::get<Matrix>(m->lambda(l)) - Matrix::Identity(2, 2)).norm() < 1e-12);
  // At r = n_1 and a -> 1 the first jump carries weight 1/2.
  CHECK(jump_weight(*m, m->jumps_from(0)[0], psi) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("Bloch map") {
  CHECK((bloch_vector(Spinor(1, 0)) - Vec3(0, 0, 1)).norm() == 0.0);
  std::mt19937_64 gen(4);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 r = random_unit(gen);
    CHECK((bloch_vector(spinor_from_bloch(r)) - r).norm() < 1e-12);
    const Spinor psi = random_spinor(gen);
    CHECK((bloch_vector(std::polar(1.0, 0.37 * k) * psi) - bloch_vector(psi)).norm() < 1e-12);
  }
  CHECK((bloch_vector(spinor_from_bloch(Vec3(0, 0, -1))) - Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK_THROWS_AS(bloch_vector(Spinor(0, 0)), std::invalid_argument);
}

TEST_CASE("chaos game") {
  const auto a = chaos_game(Vec3(0, 0, 1), 0.7, 1000000, 9);
  const auto b = chaos_game(Vec3(0, 0, 1), 0.7, 1000, 9);
  REQUIRE(a.size() == 1000000);
  for (size_t i = 0; i < b.size(); ++i) CHECK(a[i] == b[i]);
  std::array<double, 4> freq{};
  double worst_norm = 0.0;
  for (const auto& r : a) {
    worst_norm = std::max(worst_norm, std::abs(r.norm() - 1.0));
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (r.dot(tetra_directions()[i]) > r.dot(tetra_directions()[best])) best = i;
    freq[static_cast<size_t>(best)] += 1.0 / static_cast<double>(a.size());
  }
  CHECK(worst_norm < 1e-12);
  for (double f : freq) CHECK(std::abs(f - 0.25) < 0.01);
}

TEST_CASE("sphere grid is a consistent equal-area partition") {
  for (int nside : {1, 2, 3, 8, 17}) {
    const SphereGrid g(nside);
    CHECK(g.size() == 12LL * nside * nside);
    for (std::int64_t p = 0; p < g.size(); ++p) REQUIRE(g.pixel(g.center(p)) == p);
  }
  std::mt19937_64 gen(5);
  const SphereGrid g(4);
  std::vector<double> counts(static_cast<size_t>(g.size()), 0.0);
  const int n = 192000;
  for (int k = 0; k < n; ++k) counts[static_cast<size_t>(g.pixel(random_unit(gen)))] += 1;
  std::vector<double> expected(counts.size(), n / static_cast<double>(g.size()));
  double stat = 0;
  for (size_t i = 0; i < counts.size(); ++i) stat += std::pow(counts[i] - expected[i], 2) / expected[i];
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(counts.size() - 1.0), stat));
  CHECK(p > 0.01);
}

TEST_CASE("Markov operator conserves mass and converges") {
  const double a = 0.7;
  const MarkovOperator op(32, a, 16);
  auto mu = SphereMeasure::uniform(32);
  std::vector<SphereMeasure> seq{mu};
  for (int k = 0; k < 9; ++k) {
    seq.push_back(op.apply(seq.back()));
    CHECK(std::abs(seq.back().total() - 1.0) < 1e-9);
    for (double m : seq.back().mass) REQUIRE(m >= 0.0);
  }
  CHECK(l1_distance(seq[8], seq[9]) < l1_distance(seq[4], seq[5]));

  const auto& n = tetra_directions();
  const auto point = SphereMeasure::point(64, n[0]);
  const auto next = markov_step(point, a, 16);
  const double stay = next.mass[static_cast<size_t>(next.grid.pixel(n[0]))];
  CHECK(stay == doctest::Approx(ifs_probs(n[0], a)[0]).epsilon(0.05));
  for (int j = 1; j < 4; ++j)
    CHECK(cap_mass(next, ifs_map(n[0], j, a), 0.1) == doctest::Approx(ifs_probs(n[0], a)[static_cast<size_t>(j)]).epsilon(0.05));
  CHECK_THROWS_AS(MarkovOperator(8, a, 0), std::invalid_argument);
  CHECK_THROWS_AS(MarkovOperator(8, a, 8), std::invalid_argument);
}

TEST_CASE("box counting recovers known dimensions") {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi);
  std::vector<Vec3> circle, sphere, same(100000, Vec3(0, 0, 1));
  const Vec3 axis = Vec3(1, 2, 3).normalized();
  const Vec3 e1 = axis.unitOrthogonal(), e2 = axis.cross(e1);
  for (int k = 0; k < 200000; ++k) {
    const double t = u(gen);
    circle.push_back(std::cos(t) * e1 + std::sin(t) * e2);
  }
  for (int k = 0; k < 1000000; ++k) sphere.push_back(random_unit(gen));
  CHECK(box_counting_dimension(circle, log_scales()).dimension == doctest::Approx(1.0).epsilon(0.1));
  CHECK(box_counting_dimension(sphere, log_scales(0.01, 0.2)).dimension == doctest::Approx(2.0).epsilon(0.05));
  const auto deg = box_counting_dimension(same, log_scales());
  CHECK(deg.degenerate);
  CHECK(deg.dimension == 0.0);
  CHECK_THROWS_AS(box_counting_dimension(circle, log_scales(0.05, 0.1, 4)), std::invalid_argument);
}

TEST_CASE("tetrahedral rotations form a group of 12 permuting the directions") {
  const auto& g = tetrahedral_rotations();
  REQUIRE(g.size() == 12);
  for (const auto& r : g) {
    CHECK(std::abs(r.determinant() - 1.0) < 1e-12);
    for (const auto& n : tetra_directions()) {
      double best = 0;
      for (const auto& m : tetra_directions()) best = std::max(best, (r * n).dot(m));
      CHECK(best == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("spin PDP reproduces the chaos-game law") {
  const double a = 0.7;
  auto m = spin_pdp_model(a);
  PdpEngine engine(m, 0.01);
  const Vec3 r0(0, 0, 1);
  Matrix psi = spinor_from_bloch(r0);
  const auto init = make_state(*m, 0, Vector(psi));
  EnsembleOptions opt;
  opt.keep_records = true;
  opt.keep_final_psi = true;
  const int n = 4000;
  const double t_cut = 8.0;
  const auto stats = run_ensemble(engine, init, t_cut, {}, n, 77, nullptr, opt);
  const auto reference = chaos_endpoints(r0, a, n, t_cut, 78);
  const SphereGrid grid(2);
  std::vector<double> ca(static_cast<size_t>(grid.size())), cb(static_cast<size_t>(grid.size()));
  for (const auto& rec : stats.records) {
    const Spinor s = rec.final_state.psi;
    ca[static_cast<size_t>(grid.pixel(bloch_vector(s)))] += 1;
    // Events replayed through the IFS land on the engine's final state.
    Vec3 r = r0;
    for (const auto& e : rec.events) r = ifs_map(r, static_cast<int>(std::log2(e.from ^ e.to)), a);
    CHECK((r - bloch_vector(s)).norm() < 1e-9);
  }
  for (const auto& r : reference) cb[static_cast<size_t>(grid.pixel(r))] += 1;
  CHECK(two_sample_p(ca, cb) > 0.01);
}
