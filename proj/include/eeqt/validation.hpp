#pragma once

#include <cstdint>
#include <memory>

#include "eeqt/master_equation.hpp"

namespace eeqt {

/// Finite toy model used to certify the PDP engine: n_labels two-level
/// systems with random Hermitian H_alpha, jumps 0->1->...->K-1 with random
/// operators, started in label 0 with psi = |0>.
struct ToyConfig {
  int n_labels = 3;
  int dim = 2;
  std::uint64_t model_seed = 1;
  double h_scale_ev = 1.0;
  /// Jump operators are scaled so that ||g||_op^2 = rate_factor * ||H|| / hbar.
  double rate_factor = 0.25;
  /// Horizon T = periods * hbar / ||H||, step dt = dt_factor * hbar / ||H||.
  double periods = 10.0;
  double dt_factor = 1e-3;
  int trajectories = 20000;
  int samples = 51;
  double n_sigma = 5.0;
};

struct ToyModel {
  std::shared_ptr<const HybridModel> model;
  HybridPureState initial;
  double h_norm = 0.0;  // max operator norm of the H_alpha, eV
  double t_end = 0.0;
  double dt = 0.0;
  std::vector<double> sample_times;
  std::vector<LinearObservable> observables;
};

ToyModel build_toy_model(const ToyConfig& cfg);

struct ValidationResult {
  ToyModel toy;
  EnsembleStats stats;
  MasterSeries master;
  ComparisonReport report;
  ObservableSeries pdp_series;
  ObservableSeries master_series;
  bool pass = false;
};

ValidationResult run_validation(const ToyConfig& cfg, std::uint64_t master_seed, int workers = 1);

}  // namespace eeqt
