#include "eeqt/master_equation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace eeqt {

namespace {

constexpr double kPositivityTol = 1e-10;
constexpr double kTraceTol = 1e-9;
constexpr double kSigmaFloor = 1e-9;

void require_finite(const HybridModel& model) {
  for (int a = 0; a < model.num_labels(); ++a)
    if (is_grid(model.space(a)))
      throw std::invalid_argument("master equation oracle supports finite-dimensional labels only");
}

HybridDensityState axpy(const HybridDensityState& x, double h, const HybridDensityState& k) {
  HybridDensityState out = x;
  for (size_t a = 0; a < out.rho.size(); ++a) out.rho[a] += h * k.rho[a];
  return out;
}

double min_eigenvalue(const HybridDensityState& s) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : s.rho) {
    if (r.size() == 0) continue;
    const Matrix herm = 0.5 * (r + r.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff());
  }
  return m;
}

}  // namespace

double HybridDensityState::total_trace() const {
  double t = 0.0;
  for (const auto& r : rho) t += r.trace().real();
  return t;
}

HybridDensityState density_from_pure(const HybridModel& model, const HybridPureState& state) {
  require_finite(model);
  HybridDensityState out;
  for (int a = 0; a < model.num_labels(); ++a) {
    const int d = space_size(model.space(a));
    out.rho.push_back(Matrix::Zero(d, d));
  }
  const Vector psi = state.psi / std::sqrt(state.psi.squaredNorm());
  out.rho[static_cast<size_t>(state.label)] = psi * psi.adjoint();
  return out;
}

HybridDensityState liouville_rhs(const HybridModel& model, const HybridDensityState& rho) {
  require_finite(model);
  const cplx mi(0.0, -1.0 / model.units().hbar);
  HybridDensityState out;
  out.rho.resize(rho.rho.size());
  for (int a = 0; a < model.num_labels(); ++a) {
    const auto& r = rho.rho[static_cast<size_t>(a)];
    const auto& h = std::get<Matrix>(model.hamiltonian(a));
    const auto& lam = std::get<Matrix>(model.lambda(a));
    out.rho[static_cast<size_t>(a)] = mi * (h * r - r * h) - 0.5 * (lam * r + r * lam);
  }
  for (const auto& j : model.jumps()) {
    const auto& g = std::get<Matrix>(j.op);
    out.rho[static_cast<size_t>(j.target)] += g * rho.rho[static_cast<size_t>(j.source)] * g.adjoint();
  }
  return out;
}

HybridDensityState heisenberg_rhs(const HybridModel& model, const HybridDensityState& a) {
  require_finite(model);
  const cplx pi(0.0, 1.0 / model.units().hbar);
  HybridDensityState out;
  out.rho.resize(a.rho.size());
  for (int l = 0; l < model.num_labels(); ++l) {
    const auto& x = a.rho[static_cast<size_t>(l)];
    const auto& h = std::get<Matrix>(model.hamiltonian(l));
    const auto& lam = std::get<Matrix>(model.lambda(l));
    out.rho[static_cast<size_t>(l)] = pi * (h * x - x * h) - 0.5 * (lam * x + x * lam);
  }
  for (const auto& j : model.jumps()) {
    const auto& g = std::get<Matrix>(j.op);
    out.rho[static_cast<size_t>(j.source)] += g.adjoint() * a.rho[static_cast<size_t>(j.target)] * g;
  }
  return out;
}

cplx pairing(const HybridDensityState& a, const HybridDensityState& rho) {
  cplx s{0.0, 0.0};
  for (size_t l = 0; l < a.rho.size(); ++l) s += (a.rho[l].adjoint() * rho.rho[l]).trace();
  return s;
}

MasterSeries integrate_master(const HybridModel& model, const HybridDensityState& rho0, double t_end, double dt,
                              const std::vector<double>& sample_times) {
  require_finite(model);
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (t_end < 0.0) throw std::invalid_argument("integration time must be non-negative");
  if (static_cast<int>(rho0.rho.size()) != model.num_labels())
    throw std::invalid_argument("density state does not match the model labels");

  std::vector<double> stops = sample_times;
  for (size_t i = 1; i < stops.size(); ++i)
    if (stops[i] < stops[i - 1]) throw std::invalid_argument("sample times must be sorted");
  if (!stops.empty() && (stops.front() < 0.0 || stops.back() > t_end * (1 + 1e-12)))
    throw std::invalid_argument("sample times must lie in [0, T]");

  MasterSeries out;
  HybridDensityState rho = rho0;
  const double trace0 = rho.total_trace();
  double t = 0.0;
  auto check = [&] {
    const double drift = std::abs(rho.total_trace() - trace0);
    out.max_trace_drift = std::max(out.max_trace_drift, drift);
    if (drift > kTraceTol) throw NumericalError("master equation lost trace: drift " + std::to_string(drift));
  };
  auto record = [&](double at) {
    const double m = min_eigenvalue(rho);
    out.min_eigenvalue = out.times.empty() ? m : std::min(out.min_eigenvalue, m);
    if (m < -kPositivityTol)
      throw NumericalError("master equation lost positivity at t = " + std::to_string(at) +
                           " (min eigenvalue " + std::to_string(m) + ")");
    out.times.push_back(at);
    out.states.push_back(rho);
  };
  auto advance_to = [&](double target) {
    const double span = target - t;
    if (span <= 0.0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
    const double h = span / n;
    for (int s = 0; s < n; ++s) {
      const auto k1 = liouville_rhs(model, rho);
      const auto k2 = liouville_rhs(model, axpy(rho, 0.5 * h, k1));
      const auto k3 = liouville_rhs(model, axpy(rho, 0.5 * h, k2));
      const auto k4 = liouville_rhs(model, axpy(rho, h, k3));
      for (size_t a = 0; a < rho.rho.size(); ++a)
        rho.rho[a] += (h / 6.0) * (k1.rho[a] + 2.0 * k2.rho[a] + 2.0 * k3.rho[a] + k4.rho[a]);
      check();
    }
    t = target;
  };
  for (double s : stops) {
    advance_to(s);
    record(s);
  }
  advance_to(t_end);
  if (stops.empty() || stops.back() != t_end) record(t_end);
  return out;
}

double LinearObservable::value(const HybridDensityState& rho) const {
  double v = 0.0;
  for (size_t a = 0; a < ops.size(); ++a) v += (ops[a] * rho.rho[a]).trace().real();
  return v;
}

double LinearObservable::value(int label, const Vector& psi) const {
  return psi.dot(ops[static_cast<size_t>(label)] * psi).real();
}

LinearObservable LinearObservable::occupation(const HybridModel& model, int label) {
  LinearObservable o;
  o.name = "P(" + model.label(label).name + ")";
  for (int a = 0; a < model.num_labels(); ++a) {
    const int d = space_size(model.space(a));
    o.ops.push_back(a == label ? Matrix(Matrix::Identity(d, d)) : Matrix(Matrix::Zero(d, d)));
  }
  return o;
}

LinearObservable LinearObservable::uniform(const HybridModel& model, std::string name, const Matrix& op) {
  LinearObservable o;
  o.name = std::move(name);
  for (int a = 0; a < model.num_labels(); ++a) {
    if (space_size(model.space(a)) != op.rows()) throw std::invalid_argument("observable dimension mismatch");
    o.ops.push_back(op);
  }
  return o;
}

ObservableSampler make_sampler(std::vector<double> times, const std::vector<LinearObservable>& observables) {
  ObservableSampler s;
  s.times = std::move(times);
  for (const auto& o : observables) s.names.push_back(o.name);
  s.eval = [observables](int label, const Vector& psi, std::span<double> out) {
    for (size_t i = 0; i < observables.size(); ++i) out[i] = observables[i].value(label, psi);
  };
  return s;
}

ObservableSeries observable_series(const MasterSeries& series, const std::vector<LinearObservable>& observables) {
  ObservableSeries out;
  out.times = series.times;
  for (const auto& o : observables) out.names.push_back(o.name);
  for (const auto& st : series.states) {
    std::vector<double> row;
    for (const auto& o : observables) row.push_back(o.value(st));
    out.mean.push_back(row);
    out.se.emplace_back(observables.size(), 0.0);
  }
  return out;
}

ObservableSeries observable_series(const EnsembleStats& stats) {
  if (stats.n_runs < 1) throw std::invalid_argument("cannot compare an empty ensemble");
  return ObservableSeries{stats.sample_times, stats.observable_names, stats.mean, stats.se, 1.0 / stats.n_runs};
}

bool ComparisonReport::within(double n_sigma) const {
  for (const auto& r : rows)
    if (!(r.max_sigma <= n_sigma)) return false;
  return true;
}

ComparisonReport compare_series(const ObservableSeries& measured, const ObservableSeries& reference) {
  if (measured.times.size() != reference.times.size())
    throw std::invalid_argument("time grids differ in length");
  for (size_t i = 0; i < measured.times.size(); ++i)
    if (std::abs(measured.times[i] - reference.times[i]) > 1e-9 * std::max(1.0, std::abs(reference.times[i])))
      throw std::invalid_argument("time grids do not match");
  if (measured.names != reference.names) throw std::invalid_argument("observable names do not match");
  ComparisonReport report;
  for (size_t o = 0; o < measured.names.size(); ++o) {
    ObservableDeviation row;
    row.name = measured.names[o];
    for (size_t i = 0; i < measured.times.size(); ++i) {
      const double dev = std::abs(measured.mean[i][o] - reference.mean[i][o]);
      const double sigma = dev / std::max({measured.se[i][o], measured.se_floor, kSigmaFloor});
      row.max_abs_dev = std::max(row.max_abs_dev, dev);
      if (sigma > row.max_sigma) {
        row.max_sigma = sigma;
        row.worst_time = measured.times[i];
      }
    }
    report.rows.push_back(row);
  }
  return report;
}

ComparisonReport compare_ensemble_to_master(const EnsembleStats& stats, const MasterSeries& series,
                                            const std::vector<LinearObservable>& observables) {
  return compare_series(observable_series(stats), observable_series(series, observables));
}

}  // namespace eeqt
