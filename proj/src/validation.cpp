#include "eeqt/validation.hpp"

#include <random>
#include <stdexcept>

#include "eeqt/rng.hpp"

namespace eeqt {

namespace {

Matrix gaussian_matrix(Rng& rng, int n) {
  std::normal_distribution<double> g;
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

double op_norm(const Matrix& m) { return m.operatorNorm(); }

}  // namespace

ToyModel build_toy_model(const ToyConfig& cfg) {
  if (cfg.n_labels < 2 || cfg.dim < 2) throw std::invalid_argument("toy model needs >= 2 labels and dim >= 2");
  if (cfg.trajectories < 1 || cfg.samples < 2) throw std::invalid_argument("toy model needs trajectories and samples");
  if (!(cfg.periods > 0 && cfg.dt_factor > 0 && cfg.h_scale_ev > 0 && cfg.rate_factor >= 0))
    throw std::invalid_argument("toy model scales must be positive");

  Rng rng(cfg.model_seed);
  ModelSpec spec;
  std::vector<Matrix> hs;
  double h_norm = 0.0;
  for (int a = 0; a < cfg.n_labels; ++a) {
    Matrix m = gaussian_matrix(rng, cfg.dim);
    Matrix h = 0.5 * cfg.h_scale_ev * (m + m.adjoint());
    h_norm = std::max(h_norm, op_norm(h));
    spec.labels.push_back("S" + std::to_string(a));
    spec.spaces.push_back(FiniteSpace{cfg.dim});
    hs.push_back(h);
  }
  for (auto& h : hs) spec.hamiltonians.push_back(h);
  const double hbar = spec.units.hbar;
  const double rate = cfg.rate_factor * h_norm / hbar;
  for (int a = 0; a + 1 < cfg.n_labels; ++a) {
    Matrix g = gaussian_matrix(rng, cfg.dim);
    g *= std::sqrt(rate) / op_norm(g);
    spec.jumps.push_back({a, a + 1, g, std::nullopt});
  }

  ToyModel toy;
  toy.model = std::make_shared<const HybridModel>(build_model(std::move(spec)));
  Vector psi = Vector::Zero(cfg.dim);
  psi[0] = 1.0;
  toy.initial = make_state(*toy.model, 0, psi);
  toy.h_norm = h_norm;
  toy.dt = cfg.dt_factor * hbar / h_norm;
  const int steps = static_cast<int>(std::lround(cfg.periods / cfg.dt_factor));
  toy.t_end = steps * toy.dt;
  for (int s = 0; s < cfg.samples; ++s) {
    const int k = static_cast<int>(static_cast<long long>(steps) * s / (cfg.samples - 1));
    toy.sample_times.push_back(k * toy.dt);
  }
  for (int a = 0; a < cfg.n_labels; ++a) toy.observables.push_back(LinearObservable::occupation(*toy.model, a));
  if (cfg.dim == 2) {
    Matrix sx(2, 2), sz(2, 2);
    sx << 0, 1, 1, 0;
    sz << 1, 0, 0, -1;
    toy.observables.push_back(LinearObservable::uniform(*toy.model, "sigma_x", sx));
    toy.observables.push_back(LinearObservable::uniform(*toy.model, "sigma_z", sz));
  }
  return toy;
}

ValidationResult run_validation(const ToyConfig& cfg, std::uint64_t master_seed, int workers) {
  ValidationResult r;
  r.toy = build_toy_model(cfg);
  const auto& toy = r.toy;
  PdpEngine engine(toy.model, toy.dt);
  const auto sampler = make_sampler(toy.sample_times, toy.observables);
  EnsembleOptions opt;
  opt.workers = workers;
  r.stats = run_ensemble(engine, toy.initial, toy.t_end, {}, cfg.trajectories, master_seed, &sampler, opt);
  r.master = integrate_master(*toy.model, density_from_pure(*toy.model, toy.initial), toy.t_end, toy.dt,
                              toy.sample_times);
  r.pdp_series = observable_series(r.stats);
  r.master_series = observable_series(r.master, toy.observables);
  r.report = compare_series(r.pdp_series, r.master_series);
  r.pass = r.report.within(cfg.n_sigma);
  return r;
}

}  // namespace eeqt
