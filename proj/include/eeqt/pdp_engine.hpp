#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eeqt/hybrid_model.hpp"

namespace eeqt {

/// Crank-Nicolson step (I - h/2 K)^{-1} (I + h/2 K) for one label and one
/// step size. Grid labels use a tridiagonal solve (1D) or Strang splitting of
/// x and y half-operators (2D). Immutable after construction.
class Propagator {
 public:
  Propagator(const HybridModel& model, int label, double h);

  double step_size() const { return h_; }
  void apply(Vector& psi) const;

 private:
  struct Line {
    // B = I + (h/2) K on the line, factorized A = I - (h/2) K.
    std::vector<cplx> b_diag;
    cplx b_off;
    cplx a_off;
    std::vector<cplx> c_prime;
    std::vector<cplx> inv_denom;
  };
  struct Grid1 {
    Line line;
  };
  struct Grid2 {
    int nx = 0;
    int ny = 0;
    std::vector<Line> rows;  // x half-steps, one per y index
    std::vector<Line> cols;  // y full steps, one per x index
  };

  static Line factor_line(std::span<const cplx> k_diag, cplx k_off, double tau);
  static void solve_line(const Line& l, cplx* data, std::ptrdiff_t stride, int n, std::vector<cplx>& scratch);

  double h_;
  std::variant<Matrix, Grid1, Grid2> impl_;
};

/// Single continuous step of size dt, without renormalization.
HybridPureState evolve_continuous(const HybridModel& model, const HybridPureState& state, double dt);

enum class Termination { TimeCut, Absorbed };

struct TrajectoryEvent {
  double time = 0.0;
  int from = 0;
  int to = 0;
  std::optional<Position> tag;
  double pre_jump_norm2 = 0.0;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::vector<TrajectoryEvent> events;
  HybridPureState final_state;
  Termination terminated_by = Termination::TimeCut;
  double end_time = 0.0;
};

struct JumpTime {
  double time = 0.0;
  Vector psi;  // unnormalized state just before the jump
  double norm2 = 0.0;
};

struct JumpTarget {
  int label = 0;
  int jump_index = 0;
  Vector psi;  // normalized post-jump state
  std::optional<Position> tag;
};

/// Receives the normalized state at every requested sample time.
using SampleFn = std::function<void(int sample_index, int label, const Vector& psi)>;

class PrefixCache;

/// Piecewise-deterministic process driver for one model and one time step.
///
/// Time is discretized on the global grid t_k = k dt. Continuous evolution
/// runs the unnormalized damped equation; a jump fires when the squared norm
/// drops to (1 - p) times its value after the previous jump, p uniform on
/// (0, 1]. The crossing inside a step is located by bisection on the cubic
/// Hermite interpolant of the norm (derivative -(psi, Lambda psi)) to
/// 1e-3 dt, then the state is recomputed by a partial step.
class PdpEngine {
 public:
  PdpEngine(std::shared_ptr<const HybridModel> model, double dt);

  const HybridModel& model() const { return *model_; }
  std::shared_ptr<const HybridModel> model_ptr() const { return model_; }
  double dt() const { return dt_; }

  /// Advance psi in `label` by h (full steps use the cached propagator).
  void advance(int label, Vector& psi, double h) const;

  /// First time in (t0, t_max] at which ||psi_t||^2 = (1 - p) ||psi_t0||^2,
  /// or nullopt.
  std::optional<JumpTime> sample_jump_time(const HybridPureState& state, double p, double t0, double t_max) const;

  /// Inverse-CDF choice among the jumps leaving `label`, in declaration order.
  /// Throws NumericalError when every candidate weight is zero.
  JumpTarget sample_jump_target(int label, const Vector& psi, double u) const;

  /// Draw-evolve-jump loop until t_cut or an absorbing label is entered.
  /// `sample_times` must be multiples of dt within [0, t_cut].
  TrajectoryRecord run_trajectory(const HybridPureState& initial, double t_cut, const std::vector<int>& absorbing,
                                  std::uint64_t seed, const std::vector<double>& sample_times = {},
                                  const SampleFn& on_sample = {}) const;

 private:
  friend class PrefixCache;
  friend class TrajectoryRunner;

  std::shared_ptr<const HybridModel> model_;
  double dt_;
  std::vector<Propagator> full_step_;
};

/// Time-sampled observables accumulated over an ensemble.
struct ObservableSampler {
  std::vector<double> times;
  std::vector<std::string> names;
  /// Fills `out` (size names.size()) from a normalized state.
  std::function<void(int label, const Vector& psi, std::span<double> out)> eval;
  /// Also accumulate E[|psi><psi| (x) delta_label] (grid states carry the
  /// cell volume so each projector has unit trace).
  bool accumulate_projector = false;
};

struct EnsembleOptions {
  int workers = 1;
  /// Fixed partition of the trajectory index range; the merge order is the
  /// batch order, so results do not depend on `workers`.
  int batches = 20;
  bool keep_records = false;
  bool keep_final_psi = false;
  /// Share the deterministic evolution before the first jump.
  bool use_prefix_cache = true;
};

struct TimeStat {
  int count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
};

struct EnsembleStats {
  int n_runs = 0;
  /// Keyed by the final classical label name.
  std::map<std::string, int> outcome_counts;
  /// Time of the last event of runs ending in each label.
  std::map<std::string, TimeStat> outcome_times;

  std::vector<double> sample_times;
  std::vector<std::string> observable_names;
  std::vector<std::vector<double>> mean;  // [time][observable]
  std::vector<std::vector<double>> se;    // [time][observable]

  /// Projector sums per batch: [batch][time][label].
  std::vector<std::vector<std::vector<Matrix>>> projector_sums;
  std::vector<int> batch_sizes;

  std::vector<TrajectoryRecord> records;

  /// Ensemble-averaged projector for one label at one sample index.
  Matrix mean_projector(int time_index, int label) const;
};

/// Runs n trajectories; trajectory i uses seed split_seed(master_seed, i).
EnsembleStats run_ensemble(const PdpEngine& engine, const HybridPureState& initial, double t_cut,
                           const std::vector<int>& absorbing, int n, std::uint64_t master_seed,
                           const ObservableSampler* observables = nullptr, const EnsembleOptions& options = {});

/// Mean and standard error (sample std / sqrt(count)) of a sample.
TimeStat summarize(std::span<const double> values);

}  // namespace eeqt
