#include "eeqt/cloud_chamber.hpp"

#include <cmath>
#include <atomic>
#include <map>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "eeqt/rng.hpp"

namespace eeqt {

double DetectorMedium::profile(const Position& site, double x, double y) const {
  const double dx = x - site.x;
  const double dy = dimension == 2 ? y - site.y : 0.0;
  const double norm = std::pow(1.0 / (width * std::sqrt(2.0 * std::numbers::pi)), 0.5 * dimension);
  return std::sqrt(0.5 * lambda) * norm * std::exp(-(dx * dx + dy * dy) / (4.0 * width * width));
}

DetectorMedium make_medium(const MediumConfig& cfg, const GridSpace& grid) {
  if (!(cfg.width > 0.0)) throw std::invalid_argument("medium width must be positive");
  if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("medium rate must be non-negative");
  DetectorMedium m;
  m.dimension = grid.dims();
  m.width = cfg.width;
  m.lambda = cfg.lambda;
  const double pitch = cfg.pitch > 0.0 ? cfg.pitch : cfg.width;
  m.cutoff = cfg.cutoff;
  m.cell_volume = cfg.site_cell_volume > 0.0 ? cfg.site_cell_volume : std::pow(pitch, m.dimension);
  if (!cfg.sites.empty()) {
    m.sites = cfg.sites;
    return m;
  }
  auto axis_sites = [&](const Axis& a) {
    std::vector<double> out;
    const int n = static_cast<int>(std::floor((a.max - a.min) / pitch + 1e-9));
    for (int k = 0; k <= n; ++k) out.push_back(a.min + k * pitch);
    return out;
  };
  const auto xs = axis_sites(grid.x);
  const auto ys = grid.y ? axis_sites(*grid.y) : std::vector<double>{0.0};
  for (double y : ys)
    for (double x : xs) m.sites.push_back({x, y});
  return m;
}

CloudChamber build_cloud_chamber(const DetectorMedium& medium, const GridSpace& grid, const Units& units) {
  if (medium.dimension != grid.dims()) throw ModelError("medium and grid dimensions differ");
  CloudChamber c;
  c.medium = medium;
  c.grid = grid;
  ModelSpec spec;
  spec.units = units;
  spec.labels = {"even", "odd"};
  spec.spaces = {grid, grid};
  const RealVector zero = RealVector::Zero(grid.size());
  spec.hamiltonians = {zero, zero};
  const double sv = std::sqrt(medium.cell_volume);
  for (const auto& site : medium.sites) {
    auto prof = std::make_shared<const GridProfile>(
        make_profile(grid, [&](double x, double y) { return sv * medium.profile(site, x, y); }, medium.cutoff));
    if (prof->nx == 0) continue;
    spec.jumps.push_back({0, 1, prof, site});
    spec.jumps.push_back({1, 0, prof, site});
  }
  c.model = std::make_shared<const HybridModel>(build_model(std::move(spec)));
  return c;
}

Vector gaussian_packet(const GridSpace& grid, const PacketSpec& p) {
  if (!(p.sigma > 0.0)) throw std::invalid_argument("packet width must be positive");
  Vector psi(grid.size());
  for (int iy = 0; iy < grid.ny(); ++iy) {
    const double y = grid.y ? grid.y->coord(iy) - p.y0 : 0.0;
    for (int ix = 0; ix < grid.nx(); ++ix) {
      const double x = grid.x.coord(ix) - p.x0;
      const double phase = p.kx * grid.x.coord(ix) + (grid.y ? p.ky * grid.y->coord(iy) : 0.0);
      psi[iy * grid.nx() + ix] = std::polar(std::exp(-(x * x + y * y) / (4.0 * p.sigma * p.sigma)), phase);
    }
  }
  return psi / std::sqrt(norm2_in(grid, psi));
}

std::vector<double> flip_position_distribution(const CloudChamber& chamber, const Vector& psi) {
  const auto& model = *chamber.model;
  const double total = damping_rate(model, chamber.even, psi);
  if (!(total > 0.0)) throw NumericalError("state does not couple to the medium (lambda(psi) = 0)");
  std::vector<double> out(chamber.medium.sites.size(), 0.0);
  std::map<std::pair<double, double>, size_t> index;
  for (size_t s = 0; s < chamber.medium.sites.size(); ++s)
    index[{chamber.medium.sites[s].x, chamber.medium.sites[s].y}] = s;
  for (int j : model.jumps_from(chamber.even)) {
    const auto& tag = *model.jumps()[static_cast<size_t>(j)].tag;
    out[index.at({tag.x, tag.y})] = jump_weight(model, j, psi) / total;
  }
  return out;
}

FlipSet flip_set(const TrajectoryRecord& record) {
  FlipSet out;
  for (const auto& e : record.events)
    if (e.tag) out.push_back({e.time, *e.tag});
  return out;
}

Track run_track(const PdpEngine& engine, const Vector& psi0, double t_cut, std::uint64_t seed) {
  Track t;
  t.record = engine.run_trajectory(make_state(engine.model(), 0, psi0), t_cut, {}, seed);
  t.flips = flip_set(t.record);
  return t;
}

double track_angle(const FlipSet& flips) {
  if (flips.size() < 2) throw std::invalid_argument("a track direction needs at least two flips");
  double mt = 0, mx = 0, my = 0;
  for (const auto& f : flips) {
    mt += f.time;
    mx += f.site.x;
    my += f.site.y;
  }
  const double n = static_cast<double>(flips.size());
  mt /= n;
  mx /= n;
  my /= n;
  double stt = 0, stx = 0, sty = 0;
  for (const auto& f : flips) {
    stt += (f.time - mt) * (f.time - mt);
    stx += (f.time - mt) * (f.site.x - mx);
    sty += (f.time - mt) * (f.site.y - my);
  }
  if (!(stt > 0.0)) throw std::invalid_argument("flips at a single time have no direction");
  return std::atan2(sty / stt, stx / stt);
}

Moments2 position_moments(const GridSpace& grid, const Vector& psi) {
  double w = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int iy = 0; iy < grid.ny(); ++iy) {
    const double y = grid.y ? grid.y->coord(iy) : 0.0;
    for (int ix = 0; ix < grid.nx(); ++ix) {
      const double x = grid.x.coord(ix);
      const double p = std::norm(psi[iy * grid.nx() + ix]);
      w += p;
      sx += p * x;
      sy += p * y;
      sxx += p * x * x;
      syy += p * y * y;
    }
  }
  Moments2 m;
  m.mean_x = sx / w;
  m.mean_y = sy / w;
  m.var = (sxx / w - m.mean_x * m.mean_x) + (syy / w - m.mean_y * m.mean_y);
  return m;
}

namespace {

struct GrwOperators {
  Matrix h;        // grid Hamiltonian
  RealVector lam;  // Lambda(x)
  Eigen::MatrixXd kernel;  // sum_a g_a(x) g_a(x')
};

GrwOperators grw_operators(const CloudChamber& chamber) {
  const auto& grid = chamber.grid;
  if (grid.y) throw std::invalid_argument("the effective equation is implemented for 1D grids");
  const int n = grid.size();
  if (n > 128) throw std::invalid_argument("effective-equation grid limited to 128 points");
  const auto& model = *chamber.model;
  GrwOperators op;
  const double c = model.units().hbar2_over_2m;
  const double dx = grid.x.spacing();
  const auto& pot = std::get<RealVector>(model.hamiltonian(chamber.even));
  op.h = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    op.h(i, i) = 2.0 * c / (dx * dx) + pot[i];
    if (i > 0) op.h(i, i - 1) = -c / (dx * dx);
    if (i + 1 < n) op.h(i, i + 1) = -c / (dx * dx);
  }
  op.lam = std::get<RealVector>(model.lambda(chamber.even));
  op.kernel = Eigen::MatrixXd::Zero(n, n);
  for (int j : model.jumps_from(chamber.even)) {
    const auto& p = *std::get<std::shared_ptr<const GridProfile>>(model.jumps()[static_cast<size_t>(j)].op);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < p.nx; ++k) g[p.ix0 + k] = p.values[static_cast<size_t>(k)];
    op.kernel.noalias() += g * g.transpose();
  }
  return op;
}

Matrix grw_rhs(const GrwOperators& op, double hbar, const Matrix& rho) {
  const cplx mi(0.0, -1.0 / hbar);
  Matrix out = mi * (op.h * rho - rho * op.h);
  const auto n = rho.rows();
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      out(i, j) += (op.kernel(i, j) - 0.5 * (op.lam[i] + op.lam[j])) * rho(i, j);
  return out;
}

}  // namespace

Matrix grw_effective_rhs(const CloudChamber& chamber, const Matrix& rho) {
  return grw_rhs(grw_operators(chamber), chamber.model->units().hbar, rho);
}

std::vector<Matrix> integrate_grw(const CloudChamber& chamber, const Matrix& rho0, double t_end, double dt,
                                  const std::vector<double>& sample_times) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const auto op = grw_operators(chamber);
  const double hbar = chamber.model->units().hbar;
  std::vector<Matrix> out;
  Matrix rho = rho0;
  double t = 0.0;
  auto advance_to = [&](double target) {
    const double span = target - t;
    if (span <= 0.0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
    const double h = span / n;
    for (int s = 0; s < n; ++s) {
      const Matrix k1 = grw_rhs(op, hbar, rho);
      const Matrix k2 = grw_rhs(op, hbar, rho + 0.5 * h * k1);
      const Matrix k3 = grw_rhs(op, hbar, rho + 0.5 * h * k2);
      const Matrix k4 = grw_rhs(op, hbar, rho + h * k3);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    t = target;
  };
  for (double s : sample_times) {
    if (s < t - 1e-12 || s > t_end * (1 + 1e-12)) throw std::invalid_argument("sample times must be sorted within [0, T]");
    advance_to(s);
    out.push_back(rho);
  }
  return out;
}

std::vector<double> born_weights(const CloudChamber& chamber, const Vector& psi) {
  const auto& grid = chamber.grid;
  std::vector<double> out;
  const double dv = grid.cell_volume();
  for (const auto& s : chamber.medium.sites) {
    const double fx = (s.x - grid.x.min) / grid.x.spacing();
    const double fy = grid.y ? (s.y - grid.y->min) / grid.y->spacing() : 0.0;
    const long ix = std::lround(fx), iy = std::lround(fy);
    if (std::abs(fx - ix) > 1e-6 || std::abs(fy - iy) > 1e-6 || ix < 0 || ix >= grid.nx() || iy < 0 || iy >= grid.ny())
      throw std::invalid_argument("Born weights need sites on grid points");
    out.push_back(std::norm(psi[iy * grid.nx() + ix]) * dv);
  }
  return out;
}

namespace {

struct FirstFlips {
  std::vector<double> counts;
  int unflipped = 0;
};

FirstFlips first_flip_counts(const CloudChamber& chamber, const Vector& psi, int n_samples, std::uint64_t seed,
                             double delta_t, double dt, int workers) {
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  PdpEngine engine(chamber.model, dt);
  EnsembleOptions opt;
  opt.keep_records = true;
  opt.workers = workers;
  const auto stats =
      run_ensemble(engine, make_state(*chamber.model, chamber.even, psi), delta_t, {chamber.odd}, n_samples, seed,
                   nullptr, opt);
  std::map<std::pair<double, double>, size_t> index;
  for (size_t s = 0; s < chamber.medium.sites.size(); ++s)
    index[{chamber.medium.sites[s].x, chamber.medium.sites[s].y}] = s;
  FirstFlips out;
  out.counts.assign(chamber.medium.sites.size(), 0.0);
  for (const auto& r : stats.records) {
    if (r.events.empty()) {
      ++out.unflipped;
      continue;
    }
    const auto& tag = *r.events.front().tag;
    out.counts[index.at({tag.x, tag.y})] += 1.0;
  }
  return out;
}

}  // namespace

std::vector<double> born_limit_histogram(const CloudChamber& chamber, const Vector& psi, int n_samples,
                                         std::uint64_t seed, double delta_t, double dt, int workers) {
  auto f = first_flip_counts(chamber, psi, n_samples, seed, delta_t, dt, workers);
  const double total = n_samples - f.unflipped;
  if (total > 0)
    for (double& h : f.counts) h /= total;
  return f.counts;
}

GrwCheckResult run_grw_check(const GrwCheckConfig& cfg, std::uint64_t seed, int workers) {
  if (cfg.samples < 2 || cfg.trajectories < 2) throw std::invalid_argument("GRW check needs >= 2 samples and runs");
  GridSpace grid;
  grid.x = {cfg.x_min, cfg.x_max, cfg.n_points};
  MediumConfig mc;
  mc.width = cfg.width;
  mc.lambda = cfg.lambda;
  const auto chamber = build_cloud_chamber(make_medium(mc, grid), grid);
  const Vector a = gaussian_packet(grid, {-0.5 * cfg.separation, 0.0, cfg.sigma, cfg.k, 0.0});
  const Vector b = gaussian_packet(grid, {0.5 * cfg.separation, 0.0, cfg.sigma, -cfg.k, 0.0});
  Vector psi0 = a + b;
  psi0 /= std::sqrt(norm2_in(grid, psi0));

  const int n = grid.size();
  const double dx = grid.x.spacing();
  Eigen::VectorXd xs(n);
  for (int i = 0; i < n; ++i) xs[i] = grid.x.coord(i);

  ObservableSampler sampler;
  const int steps = static_cast<int>(std::lround(cfg.t_end / cfg.dt));
  const int stride = (steps % (cfg.samples - 1) == 0) ? steps / (cfg.samples - 1) : 0;
  if (stride == 0) throw std::invalid_argument("samples - 1 must divide the number of steps");
  for (int s = 0; s < cfg.samples; ++s) sampler.times.push_back(s * stride * cfg.dt);
  sampler.names = {"x", "x2"};
  sampler.eval = [&](int, const Vector& psi, std::span<double> out) {
    const Eigen::VectorXd p = psi.cwiseAbs2() * dx;
    out[0] = p.dot(xs);
    out[1] = p.dot(xs.cwiseAbs2());
  };
  sampler.accumulate_projector = true;

  PdpEngine engine(chamber.model, cfg.dt);
  EnsembleOptions opt;
  opt.workers = workers;
  const auto stats = run_ensemble(engine, make_state(*chamber.model, chamber.even, psi0), cfg.t_end, {},
                                  cfg.trajectories, seed, &sampler, opt);

  const Matrix rho0 = psi0 * psi0.adjoint() * dx;
  const auto exact = integrate_grw(chamber, rho0, cfg.t_end, cfg.rk4_dt, sampler.times);

  GrwCheckResult res;
  res.times = sampler.times;
  res.names = {"x", "x2", "purity"};
  const size_t nb = stats.projector_sums.size();
  auto purity_of = [](const Matrix& sum, double count) {
    const Matrix m = sum / count;
    const double p = (m * m).trace().real();
    return (count * p - 1.0) / (count - 1.0);
  };
  for (size_t t = 0; t < res.times.size(); ++t) {
    const Matrix& r = exact[t];
    res.exact.push_back({(r.diagonal().real().array() * xs.array()).sum(),
                         (r.diagonal().real().array() * xs.array().square()).sum(), (r * r).trace().real()});
    Matrix total = Matrix::Zero(n, n);
    std::vector<Matrix> per_batch(nb, Matrix::Zero(n, n));
    for (size_t b = 0; b < nb; ++b) {
      for (const auto& m : stats.projector_sums[b][t]) per_batch[b] += m;
      total += per_batch[b];
    }
    const double count = stats.n_runs;
    const double full = purity_of(total, count);
    // Delete-one-batch jackknife.
    double jm = 0.0;
    std::vector<double> jk(nb);
    for (size_t b = 0; b < nb; ++b) {
      jk[b] = purity_of(total - per_batch[b], count - stats.batch_sizes[b]);
      jm += jk[b] / nb;
    }
    double jv = 0.0;
    for (double v : jk) jv += (v - jm) * (v - jm);
    const double purity_se = std::sqrt((nb - 1.0) / nb * jv);
    res.pdp.push_back({stats.mean[t][0], stats.mean[t][1], full});
    res.se.push_back({stats.se[t][0], stats.se[t][1], purity_se});
  }
  const double floor = 1.0 / cfg.trajectories;
  for (size_t t = 0; t < res.times.size(); ++t)
    for (size_t o = 0; o < 3; ++o) {
      const double scale = o == 0 ? 1.0 : (o == 1 ? std::max(1.0, res.exact[t][1]) : 1.0);
      const double sig = std::max(res.se[t][o], floor * scale);
      res.max_sigma = std::max(res.max_sigma, std::abs(res.pdp[t][o] - res.exact[t][o]) / sig);
    }
  res.pass = res.max_sigma <= cfg.n_sigma;
  return res;
}

CloudChamber track_chamber(const TrackConfig& cfg) {
  GridSpace grid;
  grid.x = {-0.5 * (cfg.nx - 1) * cfg.dx, 0.5 * (cfg.nx - 1) * cfg.dx, cfg.nx};
  grid.y = Axis{-0.5 * (cfg.ny - 1) * cfg.dx, 0.5 * (cfg.ny - 1) * cfg.dx, cfg.ny};
  MediumConfig mc;
  mc.width = cfg.width;
  mc.lambda = cfg.lambda;
  mc.cutoff = cfg.cutoff;
  return build_cloud_chamber(make_medium(mc, grid), grid);
}

Vector track_packet(const CloudChamber& chamber, const TrackConfig& cfg) {
  if (cfg.k * cfg.dx >= 0.5) throw std::invalid_argument("packet momentum not resolved on the grid (k dx >= 0.5)");
  const double x0 = chamber.grid.x.min + 0.2 * (chamber.grid.x.max - chamber.grid.x.min);
  return gaussian_packet(chamber.grid, {x0, 0.0, cfg.sigma, cfg.k, 0.0});
}

TrackResult run_track_experiment(const TrackConfig& cfg, std::uint64_t seed, int workers) {
  const auto chamber = track_chamber(cfg);
  const Vector psi0 = track_packet(chamber, cfg);
  PdpEngine engine(chamber.model, cfg.dt);
  TrackResult res;
  if (cfg.lambda == 0.0) return res;  // empty medium: no flips, no tracks
  workers = std::max(1, workers);
  // Attempts run in rounds of fixed size; qualifying tracks are taken in
  // attempt order, so the result does not depend on the worker count.
  const int round = std::max(8, cfg.tracks / 4);
  while (static_cast<int>(res.tracks.size()) < cfg.tracks && res.attempts < cfg.max_attempts) {
    const int count = std::min(round, cfg.max_attempts - res.attempts);
    std::vector<Track> batch(static_cast<size_t>(count));
    std::atomic<int> next{0};
    auto work = [&] {
      for (int i; (i = next.fetch_add(1)) < count;)
        batch[static_cast<size_t>(i)] =
            run_track(engine, psi0, cfg.t_cut, split_seed(seed, static_cast<std::uint64_t>(res.attempts + i)));
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min(workers, count); ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    res.attempts += count;
    for (auto& t : batch) {
      if (static_cast<int>(res.tracks.size()) >= cfg.tracks) break;
      if (static_cast<int>(t.flips.size()) < cfg.min_flips) continue;
      t.record.final_state.psi = Vector();
      res.angles_deg.push_back(track_angle(t.flips) * 180.0 / std::numbers::pi);
      res.tracks.push_back(std::move(t));
    }
  }
  double sum = 0.0;
  for (double a : res.angles_deg) sum += std::abs(a);
  res.mean_abs_deviation_deg = res.angles_deg.empty() ? 0.0 : sum / res.angles_deg.size();
  res.pass = static_cast<int>(res.tracks.size()) == cfg.tracks &&
             res.mean_abs_deviation_deg < cfg.max_mean_deviation_deg;
  return res;
}

BornResult run_born_check(const BornConfig& cfg, std::uint64_t seed, int workers) {
  GridSpace grid;
  grid.x = {cfg.x_min, cfg.x_max, cfg.n_points};
  const double dx = grid.x.spacing();
  MediumConfig mc;
  mc.width = 0.5 * dx;
  mc.lambda = cfg.lambda;
  mc.pitch = dx;
  const auto chamber = build_cloud_chamber(make_medium(mc, grid), grid);
  const double span = cfg.x_max - cfg.x_min;
  Vector psi = gaussian_packet(grid, {cfg.x_min + 0.35 * span, 0.0, 0.05 * span, 0.0, 0.0}) +
               0.7 * gaussian_packet(grid, {cfg.x_min + 0.7 * span, 0.0, 0.08 * span, 0.0, 0.0});
  psi /= std::sqrt(norm2_in(grid, psi));

  BornResult res;
  res.sites = chamber.medium.sites;
  const auto f = first_flip_counts(chamber, psi, cfg.samples, seed, cfg.delta_t, cfg.dt, workers);
  res.unflipped_fraction = static_cast<double>(f.unflipped) / cfg.samples;
  res.histogram = f.counts;
  for (double& h : res.histogram) h /= cfg.samples;
  res.born = born_weights(chamber, psi);
  for (size_t i = 0; i < res.born.size(); ++i) res.l1 += std::abs(res.histogram[i] - res.born[i]);
  res.pass = res.l1 < cfg.max_l1;
  return res;
}

}  // namespace eeqt
