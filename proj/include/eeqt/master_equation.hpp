#pragma once

#include <string>
#include <vector>

#include "eeqt/hybrid_model.hpp"
#include "eeqt/pdp_engine.hpp"

namespace eeqt {

/// Ensemble state {rho_alpha}, one matrix per label. Finite-dimensional
/// labels only.
struct HybridDensityState {
  std::vector<Matrix> rho;

  double total_trace() const;
};

/// rho_alpha = |psi><psi| in the state's label, zero elsewhere.
HybridDensityState density_from_pure(const HybridModel& model, const HybridPureState& state);

/// d rho_alpha / dt = -i[H_alpha, rho_alpha]/hbar + sum over jumps beta->alpha
/// of g rho_beta g^dagger - {Lambda_alpha, rho_alpha}/2.
HybridDensityState liouville_rhs(const HybridModel& model, const HybridDensityState& rho);

/// Heisenberg dual: dA_alpha/dt = i[H_alpha, A_alpha]/hbar + sum over jumps
/// alpha->beta of g^dagger A_beta g - {Lambda_alpha, A_alpha}/2.
HybridDensityState heisenberg_rhs(const HybridModel& model, const HybridDensityState& a);

/// sum_alpha tr(A_alpha^dagger rho_alpha).
cplx pairing(const HybridDensityState& a, const HybridDensityState& rho);

struct MasterSeries {
  std::vector<double> times;
  std::vector<HybridDensityState> states;
  double max_trace_drift = 0.0;
  double min_eigenvalue = 0.0;
};

/// Fixed-step RK4 of the Liouville equation from rho0 over [0, T]. The state
/// is recorded at every `sample_times` entry (steps are shortened slightly so
/// each sample time is hit exactly). Throws NumericalError when positivity
/// (min eigenvalue < -1e-10) or the trace (drift > 1e-9) is lost.
MasterSeries integrate_master(const HybridModel& model, const HybridDensityState& rho0, double t_end, double dt,
                              const std::vector<double>& sample_times = {});

/// Observable acting as ops[alpha] in label alpha; value sum tr(A_alpha rho_alpha).
struct LinearObservable {
  std::string name;
  std::vector<Matrix> ops;

  double value(const HybridDensityState& rho) const;
  double value(int label, const Vector& psi) const;

  /// tr(rho_alpha): indicator of one label.
  static LinearObservable occupation(const HybridModel& model, int label);
  /// The same operator in every label (all labels must share its dimension).
  static LinearObservable uniform(const HybridModel& model, std::string name, const Matrix& op);
};

/// Sampler evaluating `observables` on the PDP's normalized states.
ObservableSampler make_sampler(std::vector<double> times, const std::vector<LinearObservable>& observables);

struct ObservableSeries {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> mean;  // [time][observable]
  std::vector<std::vector<double>> se;
  /// Lower bound on se used when comparing; an ensemble of n runs cannot
  /// resolve a bounded observable better than 1/n.
  double se_floor = 0.0;
};

ObservableSeries observable_series(const MasterSeries& series, const std::vector<LinearObservable>& observables);
/// Throws std::invalid_argument for an empty ensemble.
ObservableSeries observable_series(const EnsembleStats& stats);

struct ObservableDeviation {
  std::string name;
  double max_abs_dev = 0.0;
  /// max over times of |dev| / max(se, se_floor, 1e-9)
  double max_sigma = 0.0;
  double worst_time = 0.0;
};

struct ComparisonReport {
  std::vector<ObservableDeviation> rows;

  bool within(double n_sigma) const;
};

/// `measured` carries the Monte Carlo errors; `reference` is exact.
/// Throws std::invalid_argument on time-grid or name mismatch.
ComparisonReport compare_series(const ObservableSeries& measured, const ObservableSeries& reference);

ComparisonReport compare_ensemble_to_master(const EnsembleStats& stats, const MasterSeries& series,
                                            const std::vector<LinearObservable>& observables);

}  // namespace eeqt
