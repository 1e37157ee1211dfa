#include "eeqt/pdp_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "eeqt/rng.hpp"

namespace eeqt {

// ---------------------------------------------------------------------------
// Propagator

Propagator::Line Propagator::factor_line(std::span<const cplx> k_diag, cplx k_off, double tau) {
  const size_t n = k_diag.size();
  Line l;
  l.b_diag.resize(n);
  l.c_prime.resize(n);
  l.inv_denom.resize(n);
  l.b_off = 0.5 * tau * k_off;
  l.a_off = -0.5 * tau * k_off;
  cplx prev_c{0.0, 0.0};
  for (size_t i = 0; i < n; ++i) {
    l.b_diag[i] = 1.0 + 0.5 * tau * k_diag[i];
    const cplx a_diag = 1.0 - 0.5 * tau * k_diag[i];
    const cplx denom = i == 0 ? a_diag : a_diag - l.a_off * prev_c;
    if (std::abs(denom) < 1e-300) throw NumericalError("singular tridiagonal system in Crank-Nicolson step");
    l.inv_denom[i] = 1.0 / denom;
    l.c_prime[i] = l.a_off * l.inv_denom[i];
    prev_c = l.c_prime[i];
  }
  return l;
}

void Propagator::solve_line(const Line& l, cplx* data, std::ptrdiff_t stride, int n, std::vector<cplx>& /*scratch*/) {
  // Right-hand side B x and the forward sweep are fused; x_{i+1} is read
  // before d'_i overwrites x_i, so the update is in place.
  const cplx* bd = l.b_diag.data();
  const cplx* inv = l.inv_denom.data();
  const cplx* cp = l.c_prime.data();
  const cplx b_off = l.b_off;
  const cplx a_off = l.a_off;
  cplx prev_x{0.0, 0.0};
  cplx cur_x = data[0];
  cplx d_prev{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    const cplx next_x = i + 1 < n ? data[(i + 1) * stride] : cplx{0.0, 0.0};
    const cplx rhs = bd[i] * cur_x + b_off * (prev_x + next_x);
    const cplx d = (rhs - a_off * d_prev) * inv[i];
    data[i * stride] = d;
    d_prev = d;
    prev_x = cur_x;
    cur_x = next_x;
  }
  cplx next = data[(n - 1) * stride];
  for (int i = n - 2; i >= 0; --i) {
    next = data[i * stride] - cp[i] * next;
    data[i * stride] = next;
  }
}

Propagator::Propagator(const HybridModel& model, int label, double h) : h_(h) {
  if (!(h > 0.0)) throw std::invalid_argument("propagator step must be positive");
  auto gen = effective_generator(model, label);
  if (auto* k = std::get_if<Matrix>(&gen)) {
    const auto n = k->rows();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix a = id - 0.5 * h * *k;
    const Matrix b = id + 0.5 * h * *k;
    Eigen::PartialPivLU<Matrix> lu(a);
    impl_ = Matrix(lu.solve(b));
    return;
  }
  const auto& g = std::get<GridGenerator>(gen);
  const auto& grid = std::get<GridSpace>(model.space(label));
  if (!grid.y) {
    impl_ = Grid1{factor_line(std::span<const cplx>(g.diag.data(), static_cast<size_t>(g.diag.size())), g.off_x, h)};
    return;
  }
  Grid2 g2;
  g2.nx = grid.nx();
  g2.ny = grid.ny();
  // diag = -2 off_x - 2 off_y + rest; each direction keeps its own kinetic
  // diagonal and half of the rest (potential and damping).
  std::vector<cplx> line;
  line.resize(static_cast<size_t>(g2.nx));
  for (int iy = 0; iy < g2.ny; ++iy) {
    for (int ix = 0; ix < g2.nx; ++ix) {
      const cplx total = g.diag[iy * g2.nx + ix];
      const cplx rest = total + 2.0 * g.off_x + 2.0 * g.off_y;
      line[static_cast<size_t>(ix)] = -2.0 * g.off_x + 0.5 * rest;
    }
    g2.rows.push_back(factor_line(line, g.off_x, 0.5 * h));
  }
  line.resize(static_cast<size_t>(g2.ny));
  for (int ix = 0; ix < g2.nx; ++ix) {
    for (int iy = 0; iy < g2.ny; ++iy) {
      const cplx total = g.diag[iy * g2.nx + ix];
      const cplx rest = total + 2.0 * g.off_x + 2.0 * g.off_y;
      line[static_cast<size_t>(iy)] = -2.0 * g.off_y + 0.5 * rest;
    }
    g2.cols.push_back(factor_line(line, g.off_y, h));
  }
  impl_ = std::move(g2);
}

void Propagator::apply(Vector& psi) const {
  thread_local std::vector<cplx> scratch;
  if (const auto* u = std::get_if<Matrix>(&impl_)) {
    psi = (*u * psi).eval();
    return;
  }
  if (const auto* g1 = std::get_if<Grid1>(&impl_)) {
    solve_line(g1->line, psi.data(), 1, static_cast<int>(psi.size()), scratch);
    return;
  }
  const auto& g2 = std::get<Grid2>(impl_);
  for (int iy = 0; iy < g2.ny; ++iy)
    solve_line(g2.rows[static_cast<size_t>(iy)], psi.data() + static_cast<std::ptrdiff_t>(iy) * g2.nx, 1, g2.nx,
               scratch);
  for (int ix = 0; ix < g2.nx; ++ix)
    solve_line(g2.cols[static_cast<size_t>(ix)], psi.data() + ix, g2.nx, g2.ny, scratch);
  for (int iy = 0; iy < g2.ny; ++iy)
    solve_line(g2.rows[static_cast<size_t>(iy)], psi.data() + static_cast<std::ptrdiff_t>(iy) * g2.nx, 1, g2.nx,
               scratch);
}

HybridPureState evolve_continuous(const HybridModel& model, const HybridPureState& state, double dt) {
  Propagator prop(model, state.label, dt);
  HybridPureState out{state.label, state.psi, 0.0};
  prop.apply(out.psi);
  out.norm2 = norm2_in(model.space(state.label), out.psi);
  return out;
}

// ---------------------------------------------------------------------------
// Engine

namespace {

constexpr double kBisectionTol = 1e-3;

/// Global step grid on [0, t_cut]: nodes k*dt, the last one clipped to t_cut.
struct Clock {
  double dt = 0.0;
  double t_cut = 0.0;
  int n_steps = 0;
  bool last_full = true;

  Clock(double dt_, double t_cut_) : dt(dt_), t_cut(t_cut_) {
    if (!(t_cut > 0.0)) throw std::invalid_argument("t_cut must be positive");
    n_steps = std::max(1, static_cast<int>(std::ceil(t_cut / dt - 1e-9)));
    last_full = std::abs(n_steps * dt - t_cut) <= 1e-12 * t_cut;
  }

  double node_time(int k) const { return k == n_steps ? t_cut : k * dt; }
  bool full_step_into(int k, bool on_grid) const { return on_grid && (k < n_steps || last_full); }
};

std::vector<int> sample_nodes(const Clock& clock, const std::vector<double>& times) {
  std::vector<int> nodes;
  nodes.reserve(times.size());
  for (double t : times) {
    int k;
    if (std::abs(t - clock.t_cut) <= 1e-12 * clock.t_cut) {
      k = clock.n_steps;
    } else {
      k = static_cast<int>(std::lround(t / clock.dt));
      if (std::abs(k * clock.dt - t) > 1e-9 * std::max(clock.dt, std::abs(t)) || k < 0 || k > clock.n_steps)
        throw std::invalid_argument("sample times must be multiples of dt inside [0, t_cut]");
    }
    if (!nodes.empty() && k < nodes.back()) throw std::invalid_argument("sample times must be sorted");
    nodes.push_back(k);
  }
  return nodes;
}

Vector normalized(const Vector& psi, double norm2) { return psi / std::sqrt(norm2); }

double hermite_norm(double s, double h, double na, double nb, double da, double db) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * na + (s3 - 2 * s2 + s) * h * da + (-2 * s3 + 3 * s2) * nb + (s3 - s2) * h * db;
}

}  // namespace

/// Deterministic no-jump evolution from a shared initial state, stored as
/// per-node norms plus checkpoints. Replaying from a checkpoint repeats the
/// exact arithmetic of a direct run, so cached and uncached trajectories are
/// bit-identical.
class PrefixCache {
 public:
  PrefixCache(const PdpEngine& engine, const HybridPureState& initial, const Clock& clock,
              const std::vector<int>& sample_nodes)
      : engine_(engine), clock_(clock), label_(initial.label) {
    const auto n = static_cast<double>(initial.psi.size());
    const double bytes = (clock.n_steps + 1.0) * n * sizeof(cplx);
    constexpr double kCap = 192.0 * 1024 * 1024;
    stride_ = std::max(16, static_cast<int>(std::ceil(bytes / kCap)));

    const auto& space = engine.model().space(label_);
    Vector psi = initial.psi;
    norm2_.reserve(static_cast<size_t>(clock.n_steps) + 1);
    norm2_.push_back(norm2_in(space, psi));
    checkpoints_.push_back(psi);
    size_t next_sample = 0;
    auto store_samples = [&](int k) {
      while (next_sample < sample_nodes.size() && sample_nodes[next_sample] == k) {
        samples_.emplace_back(k, psi);
        ++next_sample;
      }
    };
    store_samples(0);
    for (int k = 1; k <= clock.n_steps; ++k) {
      step_into(psi, k);
      norm2_.push_back(norm2_in(space, psi));
      if (k % stride_ == 0) checkpoints_.push_back(psi);
      store_samples(k);
    }
    final_psi_ = std::move(psi);
    running_min_.resize(norm2_.size());
    double m = norm2_[0];
    for (size_t k = 0; k < norm2_.size(); ++k) running_min_[k] = m = std::min(m, norm2_[k]);
  }

  int label() const { return label_; }

  /// First node k >= 1 with norm2[k] <= threshold, or -1.
  int first_crossing(double threshold) const {
    auto it = std::find_if(running_min_.begin() + 1, running_min_.end(),
                           [&](double v) { return v <= threshold; });
    if (it == running_min_.end()) return -1;
    // running_min first drops to <= threshold exactly where norm2 does.
    return static_cast<int>(it - running_min_.begin());
  }

  double norm2_at(int k) const { return norm2_[static_cast<size_t>(k)]; }
  const Vector& final_psi() const { return final_psi_; }

  Vector state_at(int k) const {
    const int c = k / stride_;
    Vector psi = checkpoints_[static_cast<size_t>(c)];
    for (int m = c * stride_ + 1; m <= k; ++m) step_into(psi, m);
    return psi;
  }

  /// Stored raw states at sample nodes, in node order.
  const std::vector<std::pair<int, Vector>>& samples() const { return samples_; }

 private:
  void step_into(Vector& psi, int k) const {
    if (clock_.full_step_into(k, true))
      engine_.full_step_[static_cast<size_t>(label_)].apply(psi);
    else
      Propagator(engine_.model(), label_, clock_.node_time(k) - clock_.node_time(k - 1)).apply(psi);
  }

  const PdpEngine& engine_;
  Clock clock_;
  int label_;
  int stride_ = 16;
  std::vector<double> norm2_;
  std::vector<double> running_min_;
  std::vector<Vector> checkpoints_;
  std::vector<std::pair<int, Vector>> samples_;
  Vector final_psi_;
};

class TrajectoryRunner {
 public:
  TrajectoryRunner(const PdpEngine& engine, const Clock& clock, const std::vector<int>& nodes, const SampleFn& on_sample)
      : engine_(engine), model_(engine.model()), clock_(clock), nodes_(nodes), on_sample_(on_sample) {}

  struct Cursor {
    int label = 0;
    Vector psi;
    double norm2 = 0.0;
    double t = 0.0;
    int k_next = 1;
    bool on_grid = true;
  };

  /// Evolve until the squared norm reaches `threshold` (jump) or the clock
  /// runs out. On a crossing the cursor holds the pre-jump state at t1.
  bool evolve_segment(Cursor& c, double threshold, bool can_jump) {
    const auto& space = model_.space(c.label);
    Vector psi_b(c.psi.size());
    while (c.k_next <= clock_.n_steps) {
      const double t_b = clock_.node_time(c.k_next);
      psi_b = c.psi;
      if (clock_.full_step_into(c.k_next, c.on_grid))
        engine_.full_step_[static_cast<size_t>(c.label)].apply(psi_b);
      else
        Propagator(model_, c.label, t_b - c.t).apply(psi_b);
      const double n_b = norm2_in(space, psi_b);
      if (can_jump && n_b <= threshold) {
        locate_crossing(c, psi_b, t_b, n_b, threshold);
        return true;
      }
      c.psi.swap(psi_b);
      c.norm2 = n_b;
      c.t = t_b;
      c.on_grid = true;
      emit_at(c.k_next, c);
      ++c.k_next;
    }
    return false;
  }

  /// Same as evolve_segment for the first segment, served from the cache.
  bool evolve_first_segment_cached(Cursor& c, double threshold, const PrefixCache& cache) {
    const int k = cache.first_crossing(threshold);
    const auto& samples = cache.samples();
    if (k < 0) {
      for (const auto& [node, psi] : samples) emit_raw(node, c.label, psi, cache.norm2_at(node));
      c.psi = cache.final_psi();
      c.norm2 = cache.norm2_at(clock_.n_steps);
      c.t = clock_.t_cut;
      c.k_next = clock_.n_steps + 1;
      return false;
    }
    for (const auto& [node, psi] : samples) {
      if (node >= k) break;
      emit_raw(node, c.label, psi, cache.norm2_at(node));
    }
    c.psi = cache.state_at(k - 1);
    c.norm2 = cache.norm2_at(k - 1);
    c.t = clock_.node_time(k - 1);
    c.k_next = k;
    c.on_grid = true;
    return evolve_segment(c, threshold, true);
  }

  void emit_remaining(const Cursor& c) {
    if (!on_sample_) return;
    while (next_sample_ < nodes_.size()) {
      on_sample_(static_cast<int>(next_sample_), c.label, normalized(c.psi, c.norm2));
      ++next_sample_;
    }
  }

  void emit_at(int node, const Cursor& c) { emit_raw(node, c.label, c.psi, c.norm2); }

 private:
  void emit_raw(int node, int label, const Vector& psi, double norm2) {
    if (!on_sample_) return;
    while (next_sample_ < nodes_.size() && nodes_[next_sample_] == node) {
      on_sample_(static_cast<int>(next_sample_), label, normalized(psi, norm2));
      ++next_sample_;
    }
  }

  void locate_crossing(Cursor& c, const Vector& psi_b, double t_b, double n_b, double threshold) {
    const double h = t_b - c.t;
    const double da = -damping_rate(model_, c.label, c.psi);
    const double db = -damping_rate(model_, c.label, psi_b);
    double lo = 0.0;
    double hi = 1.0;
    while ((hi - lo) * h > kBisectionTol * clock_.dt) {
      const double mid = 0.5 * (lo + hi);
      if (hermite_norm(mid, h, c.norm2, n_b, da, db) > threshold)
        lo = mid;
      else
        hi = mid;
    }
    const double s = 0.5 * (lo + hi);
    Propagator(model_, c.label, s * h).apply(c.psi);
    c.norm2 = norm2_in(model_.space(c.label), c.psi);
    c.t += s * h;
    c.on_grid = false;
  }

  const PdpEngine& engine_;
  const HybridModel& model_;
  const Clock& clock_;
  const std::vector<int>& nodes_;
  const SampleFn& on_sample_;
  size_t next_sample_ = 0;
};

PdpEngine::PdpEngine(std::shared_ptr<const HybridModel> model, double dt) : model_(std::move(model)), dt_(dt) {
  if (!model_) throw std::invalid_argument("null model");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  full_step_.reserve(static_cast<size_t>(model_->num_labels()));
  for (int a = 0; a < model_->num_labels(); ++a) full_step_.emplace_back(*model_, a, dt);
}

void PdpEngine::advance(int label, Vector& psi, double h) const {
  if (h == dt_)
    full_step_[static_cast<size_t>(label)].apply(psi);
  else
    Propagator(*model_, label, h).apply(psi);
}

std::optional<JumpTime> PdpEngine::sample_jump_time(const HybridPureState& state, double p, double t0,
                                                    double t_max) const {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0, 1]");
  if (!(t_max > t0)) return std::nullopt;
  if (!model_->has_jumps_from(state.label)) return std::nullopt;
  // Run on a local clock starting at t0.
  const Clock clock(dt_, t_max - t0);
  const std::vector<int> no_nodes;
  const SampleFn no_fn;
  TrajectoryRunner runner(*this, clock, no_nodes, no_fn);
  TrajectoryRunner::Cursor c{state.label, state.psi, norm2_in(model_->space(state.label), state.psi), 0.0, 1, true};
  const double threshold = c.norm2 * (1.0 - p);
  if (!runner.evolve_segment(c, threshold, true)) return std::nullopt;
  return JumpTime{t0 + c.t, std::move(c.psi), c.norm2};
}

JumpTarget PdpEngine::sample_jump_target(int label, const Vector& psi, double u) const {
  const auto& candidates = model_->jumps_from(label);
  if (candidates.empty()) throw NumericalError("no jumps leave label '" + model_->label(label).name + "'");
  std::vector<double> cumulative(candidates.size());
  double total = 0.0;
  for (size_t c = 0; c < candidates.size(); ++c) {
    total += jump_weight(*model_, candidates[c], psi);
    cumulative[c] = total;
  }
  if (!(total > 0.0))
    throw NumericalError("cannot jump from a state annihilated by Lambda in label '" + model_->label(label).name + "'");
  const double x = u * total;
  size_t pick = static_cast<size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
  pick = std::min(pick, candidates.size() - 1);
  // Skip zero-weight candidates that upper_bound can land on at the end.
  while (pick > 0 && cumulative[pick] == cumulative[pick - 1]) --pick;
  const int j = candidates[pick];
  const auto& jump = model_->jumps()[static_cast<size_t>(j)];
  Vector out = apply_jump(*model_, j, psi);
  const double n2 = norm2_in(model_->space(jump.target), out);
  out /= std::sqrt(n2);
  return JumpTarget{jump.target, j, std::move(out), jump.tag};
}

namespace {

TrajectoryRecord run_one(const PdpEngine& engine, const Clock& clock, const std::vector<int>& nodes,
                         const HybridPureState& initial, const std::vector<int>& absorbing, std::uint64_t seed,
                         const SampleFn& on_sample, const PrefixCache* cache) {
  const auto& model = engine.model();
  TrajectoryRunner runner(engine, clock, nodes, on_sample);
  TrajectoryRunner::Cursor c{initial.label, initial.psi, norm2_in(model.space(initial.label), initial.psi), 0.0, 1,
                             true};
  if (!(c.norm2 > 0.0)) throw std::invalid_argument("initial state has zero norm");
  TrajectoryRecord rec;
  rec.seed = seed;
  Rng rng(seed);
  bool first = true;
  if (!(cache && cache->label() == c.label)) runner.emit_at(0, c);
  auto is_absorbing = [&](int a) { return std::find(absorbing.begin(), absorbing.end(), a) != absorbing.end(); };
  while (true) {
    if (is_absorbing(c.label)) {
      rec.terminated_by = Termination::Absorbed;
      break;
    }
    const bool can_jump = model.has_jumps_from(c.label);
    double threshold = -1.0;
    if (can_jump) threshold = c.norm2 * (1.0 - rng.uniform_open_closed());
    bool jumped;
    if (first && cache && can_jump)
      jumped = runner.evolve_first_segment_cached(c, threshold, *cache);
    else
      jumped = runner.evolve_segment(c, threshold, can_jump);
    first = false;
    if (!jumped) {
      rec.terminated_by = Termination::TimeCut;
      break;
    }
    const double pre = c.norm2;
    auto target = engine.sample_jump_target(c.label, c.psi, rng.uniform());
    rec.events.push_back({c.t, c.label, target.label, target.tag, pre});
    c.label = target.label;
    c.psi = std::move(target.psi);
    c.norm2 = norm2_in(model.space(c.label), c.psi);
  }
  runner.emit_remaining(c);
  rec.end_time = rec.terminated_by == Termination::TimeCut ? clock.t_cut : c.t;
  rec.final_state = HybridPureState{c.label, std::move(c.psi), c.norm2};
  return rec;
}

}  // namespace

TrajectoryRecord PdpEngine::run_trajectory(const HybridPureState& initial, double t_cut,
                                           const std::vector<int>& absorbing, std::uint64_t seed,
                                           const std::vector<double>& sample_times, const SampleFn& on_sample) const {
  const Clock clock(dt_, t_cut);
  const auto nodes = sample_nodes(clock, sample_times);
  return run_one(*this, clock, nodes, initial, absorbing, seed, on_sample, nullptr);
}

// ---------------------------------------------------------------------------
// Ensemble

TimeStat summarize(std::span<const double> values) {
  TimeStat s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double mean = 0.0;
  double m2 = 0.0;
  int n = 0;
  for (double v : values) {
    ++n;
    const double d = v - mean;
    mean += d / n;
    m2 += d * (v - mean);
  }
  s.mean = mean;
  if (n > 1) s.se = std::sqrt(m2 / (n - 1) / n);
  return s;
}

Matrix EnsembleStats::mean_projector(int time_index, int label) const {
  Matrix out;
  for (const auto& batch : projector_sums) {
    const auto& m = batch.at(static_cast<size_t>(time_index)).at(static_cast<size_t>(label));
    if (out.size() == 0)
      out = m;
    else
      out += m;
  }
  return out / static_cast<double>(n_runs);
}

namespace {

struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    count += 1.0;
    const double d = v - mean;
    mean += d / count;
    m2 += d * (v - mean);
  }
  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double n = count + o.count;
    const double d = o.mean - mean;
    mean += d * o.count / n;
    m2 += o.m2 + d * d * count * o.count / n;
    count = n;
  }
};

struct BatchResult {
  std::vector<std::vector<Moments>> moments;  // [time][obs]
  std::vector<std::vector<Matrix>> projectors;
  std::vector<std::vector<double>> final_event_times;  // per label
  std::vector<int> final_labels;
  std::vector<TrajectoryRecord> records;
};

}  // namespace

EnsembleStats run_ensemble(const PdpEngine& engine, const HybridPureState& initial, double t_cut,
                           const std::vector<int>& absorbing, int n, std::uint64_t master_seed,
                           const ObservableSampler* observables, const EnsembleOptions& options) {
  if (n < 1) throw std::invalid_argument("ensemble size must be >= 1");
  const auto& model = engine.model();
  const Clock clock(engine.dt(), t_cut);
  const std::vector<double> no_times;
  const auto& times = observables ? observables->times : no_times;
  const auto nodes = sample_nodes(clock, times);
  const size_t n_obs = observables ? observables->names.size() : 0;
  const int labels = model.num_labels();
  const bool projector = observables && observables->accumulate_projector;

  std::unique_ptr<PrefixCache> cache;
  const bool initial_absorbing = std::find(absorbing.begin(), absorbing.end(), initial.label) != absorbing.end();
  if (options.use_prefix_cache && n > 1 && !initial_absorbing && model.has_jumps_from(initial.label))
    cache = std::make_unique<PrefixCache>(engine, initial, clock, nodes);

  const int batches = std::clamp(options.batches, 1, n);
  std::vector<BatchResult> results(static_cast<size_t>(batches));
  auto batch_begin = [&](int b) { return static_cast<int>(static_cast<long long>(n) * b / batches); };

  auto run_batch = [&](int b) {
    BatchResult& r = results[static_cast<size_t>(b)];
    r.moments.assign(times.size(), std::vector<Moments>(n_obs));
    r.final_event_times.assign(static_cast<size_t>(labels), {});
    if (projector) {
      r.projectors.assign(times.size(), std::vector<Matrix>(static_cast<size_t>(labels)));
      for (auto& per_t : r.projectors)
        for (int a = 0; a < labels; ++a) {
          const int d = space_size(model.space(a));
          per_t[static_cast<size_t>(a)] = Matrix::Zero(d, d);
        }
    }
    std::vector<double> buf(n_obs);
    SampleFn fn;
    if (observables) {
      fn = [&](int s, int label, const Vector& psi) {
        if (n_obs > 0) {
          observables->eval(label, psi, buf);
          for (size_t o = 0; o < n_obs; ++o) r.moments[static_cast<size_t>(s)][o].add(buf[o]);
        }
        if (projector) {
          const auto& space = model.space(label);
          const double w = is_grid(space) ? std::get<GridSpace>(space).cell_volume() : 1.0;
          r.projectors[static_cast<size_t>(s)][static_cast<size_t>(label)].noalias() += w * psi * psi.adjoint();
        }
      };
    }
    for (int i = batch_begin(b); i < batch_begin(b + 1); ++i) {
      const auto seed = split_seed(master_seed, static_cast<std::uint64_t>(i));
      auto rec = run_one(engine, clock, nodes, initial, absorbing, seed, fn, cache.get());
      const int fl = rec.final_state.label;
      r.final_labels.push_back(fl);
      r.final_event_times[static_cast<size_t>(fl)].push_back(rec.events.empty()
                                                                  ? std::numeric_limits<double>::quiet_NaN()
                                                                  : rec.events.back().time);
      if (options.keep_records) {
        if (!options.keep_final_psi) rec.final_state.psi.resize(0);
        r.records.push_back(std::move(rec));
      }
    }
  };

  const int workers = std::clamp(options.workers, 1, batches);
  if (workers == 1) {
    for (int b = 0; b < batches; ++b) run_batch(b);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int b = next++; b < batches; b = next++) {
          try {
            run_batch(b);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  EnsembleStats stats;
  stats.n_runs = n;
  stats.sample_times = times;
  if (observables) stats.observable_names = observables->names;
  std::vector<std::vector<Moments>> total(times.size(), std::vector<Moments>(n_obs));
  std::vector<std::vector<double>> event_times(static_cast<size_t>(labels));
  for (auto& r : results) {
    for (size_t s = 0; s < times.size(); ++s)
      for (size_t o = 0; o < n_obs; ++o) total[s][o].merge(r.moments[s][o]);
    for (int a = 0; a < labels; ++a)
      for (double t : r.final_event_times[static_cast<size_t>(a)]) event_times[static_cast<size_t>(a)].push_back(t);
    for (int fl : r.final_labels) stats.outcome_counts[model.label(fl).name] += 1;
    stats.batch_sizes.push_back(static_cast<int>(r.final_labels.size()));
    if (projector) stats.projector_sums.push_back(std::move(r.projectors));
    for (auto& rec : r.records) stats.records.push_back(std::move(rec));
  }
  for (int a = 0; a < labels; ++a) {
    auto& v = event_times[static_cast<size_t>(a)];
    if (v.empty()) continue;
    std::vector<double> finite;
    for (double t : v)
      if (!std::isnan(t)) finite.push_back(t);
    stats.outcome_times[model.label(a).name] = summarize(finite);
  }
  stats.mean.assign(times.size(), std::vector<double>(n_obs));
  stats.se.assign(times.size(), std::vector<double>(n_obs));
  for (size_t s = 0; s < times.size(); ++s)
    for (size_t o = 0; o < n_obs; ++o) {
      const auto& m = total[s][o];
      stats.mean[s][o] = m.mean;
      stats.se[s][o] = m.count > 1 ? std::sqrt(std::max(m.m2, 0.0) / (m.count - 1) / m.count) : 0.0;
    }
  return stats;
}

}  // namespace eeqt
