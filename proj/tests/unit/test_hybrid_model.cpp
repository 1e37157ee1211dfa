#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "eeqt/hybrid_model.hpp"
#include "test_support.hpp"

using namespace eeqt;
using namespace eeqt::test;

TEST_CASE("sigma_x jump gives Lambda_0 = I and Lambda_1 = 0") {
  auto m = finite_model({Matrix::Zero(2, 2), Matrix::Zero(2, 2)}, {{0, 1, pauli_x()}});
  const auto& l0 = std::get<Matrix>(m->lambda(0));
  const auto& l1 = std::get<Matrix>(m->lambda(1));
  CHECK((l0 - Matrix::Identity(2, 2)).norm() < 1e-15);
  CHECK(l1.norm() == 0.0);
}

TEST_CASE("build_model rejects invalid descriptions") {
  const Matrix z = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(finite_model({z, z}, {{0, 0, pauli_x()}}), ModelError);
  CHECK_THROWS_AS(finite_model({z, z}, {{0, 2, pauli_x()}}), ModelError);
  CHECK_THROWS_AS(finite_model({z, z}, {{0, 1, Matrix::Identity(3, 2)}}), ModelError);

  Matrix h(2, 2);
  h << 0, 1, 0, 0;
  CHECK_THROWS_AS(finite_model({h}, {}), ModelError);

  ModelSpec grid;
  grid.labels = {"A"};
  grid.spaces = {GridSpace{Axis{0.0, 1.0, 0}, std::nullopt}};
  grid.hamiltonians = {RealVector()};
  CHECK_THROWS_AS(build_model(grid), ModelError);
}

TEST_CASE("Lambda is Hermitian PSD and equals the sum of jump weights") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 2 + trial;
    auto m = finite_model({random_hermitian(gen, n), random_hermitian(gen, n), random_hermitian(gen, n)},
                          {{0, 1, random_matrix(gen, n)}, {0, 2, random_matrix(gen, n)}, {1, 2, random_matrix(gen, n)}});
    for (int a = 0; a < 3; ++a) {
      const auto& lam = std::get<Matrix>(m->lambda(a));
      CHECK((lam - lam.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
      Eigen::SelfAdjointEigenSolver<Matrix> es(lam);
      CHECK(es.eigenvalues().minCoeff() >= -1e-12);
      for (int k = 0; k < 100; ++k) {
        const Vector psi = random_state(gen, n);
        double sum = 0.0;
        for (int j : m->jumps_from(a)) sum += jump_weight(*m, j, psi);
        const double rate = damping_rate(*m, a, psi);
        CHECK(std::abs(sum - rate) <= 1e-12 * std::max(1.0, rate));
      }
    }
  }
}

TEST_CASE("effective generator of H = 0, Lambda = I is -I/2") {
  auto m = finite_model({Matrix::Zero(2, 2), Matrix::Zero(2, 2)}, {{0, 1, pauli_x()}});
  const auto k = std::get<Matrix>(effective_generator(*m, 0));
  CHECK((k + 0.5 * Matrix::Identity(2, 2)).norm() < 1e-15);
  const auto k1 = std::get<Matrix>(effective_generator(*m, 1));
  CHECK(k1.norm() == 0.0);
}

TEST_CASE("grid generator matches a dense finite-difference construction") {
  ModelSpec spec;
  const GridSpace grid{Axis{-1.0, 1.0, 8}, std::nullopt};
  spec.labels = {"A", "B"};
  spec.spaces = {grid, grid};
  RealVector v(8);
  for (int i = 0; i < 8; ++i) v[i] = 0.3 * i;
  spec.hamiltonians = {Hamiltonian(v), Hamiltonian(RealVector(RealVector::Zero(8)))};
  auto prof = std::make_shared<const GridProfile>(make_profile(grid, [](double x, double) { return std::exp(-x * x); }));
  spec.jumps = {{0, 1, prof, std::nullopt}};
  const auto m = build_model(spec);
  const auto g = std::get<GridGenerator>(effective_generator(m, 0));

  const double hbar = m.units().hbar;
  const double c = m.units().hbar2_over_2m;
  const double dx = grid.x.spacing();
  Matrix h = Matrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) {
    h(i, i) = 2 * c / (dx * dx) + v[i];
    if (i > 0) h(i, i - 1) = -c / (dx * dx);
    if (i < 7) h(i, i + 1) = -c / (dx * dx);
  }
  Matrix lam = Matrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) lam(i, i) = std::exp(-2 * grid.x.coord(i) * grid.x.coord(i));
  const Matrix dense = cplx(0, -1) / hbar * h - 0.5 * lam;

  Matrix built = Matrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) {
    built(i, i) = g.diag[i];
    if (i > 0) built(i, i - 1) = g.off_x;
    if (i < 7) built(i, i + 1) = g.off_x;
  }
  CHECK((built - dense).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("grid profiles map between offset grids") {
  const GridSpace wide{Axis{0.0, 10.0, 11}, std::nullopt};
  const GridSpace narrow{Axis{3.0, 8.0, 6}, std::nullopt};
  ModelSpec spec;
  spec.labels = {"W", "N"};
  spec.spaces = {wide, narrow};
  spec.hamiltonians = {Hamiltonian(RealVector(RealVector::Zero(11))), Hamiltonian(RealVector(RealVector::Zero(6)))};
  auto prof = std::make_shared<const GridProfile>(
      make_profile(wide, [](double x, double) { return (x >= 4 && x <= 6) ? 1.0 : 0.0; }));
  spec.jumps = {{0, 1, prof, Position{5.0, 0.0}}};
  const auto m = build_model(spec);
  Vector psi = Vector::Ones(11);
  const Vector out = apply_jump(m, 0, psi);
  REQUIRE(out.size() == 6);
  CHECK(out[0] == cplx(0.0));
  CHECK(out[1] == cplx(1.0));
  CHECK(out[3] == cplx(1.0));
  CHECK(out[4] == cplx(0.0));
  CHECK(jump_weight(m, 0, psi) == doctest::Approx(3.0));

  spec.spaces[1] = GridSpace{Axis{3.5, 8.5, 6}, std::nullopt};
  CHECK_THROWS_AS(build_model(spec), ModelError);
}

TEST_CASE("grid norm carries the dx weight") {
  const GridSpace g{Axis{-10.0, 10.0, 2001}, std::nullopt};
  Vector psi(g.size());
  for (int i = 0; i < g.size(); ++i) psi[i] = std::exp(-g.x.coord(i) * g.x.coord(i) / 2.0);
  CHECK(norm2_in(g, psi) == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-8));
}
