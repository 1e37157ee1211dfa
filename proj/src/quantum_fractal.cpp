#include "eeqt/quantum_fractal.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "eeqt/rng.hpp"

namespace eeqt {

namespace {

Vec3 map_formula(const Vec3& r, const Vec3& n, double a) {
  const double rn = r.dot(n);
  const Vec3 num = (1.0 - a * a) * r + 2.0 * a * (1.0 + a * rn) * n;
  const double den = 1.0 + a * a + 2.0 * a * rn;
  return (num / den).normalized();
}

void check_index(int i) {
  if (i < 0 || i > 3) throw std::invalid_argument("tetrahedral map index must be 0..3");
}

int pick(const std::array<double, 4>& p, double u) {
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    acc += p[static_cast<size_t>(i)];
    if (u < acc) return i;
  }
  return 3;
}

}  // namespace

const std::array<Vec3, 4>& tetra_directions() {
  static const std::array<Vec3, 4> dirs = [] {
    const double s2 = std::sqrt(2.0);
    const double s23 = std::sqrt(2.0 / 3.0);
    return std::array<Vec3, 4>{Vec3(1.0, 0.0, 0.0), Vec3(-1.0 / 3.0, 0.0, 2.0 * s2 / 3.0),
                               Vec3(-1.0 / 3.0, s23, -s2 / 3.0), Vec3(-1.0 / 3.0, -s23, -s2 / 3.0)};
  }();
  return dirs;
}

Vec3 ifs_map(const Vec3& r, int i, double a) {
  check_index(i);
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("fuzziness must lie in (0, 1)");
  return map_formula(r, tetra_directions()[static_cast<size_t>(i)], a);
}

Vec3 ifs_map_inverse(const Vec3& r, int i, double a) {
  check_index(i);
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("fuzziness must lie in (0, 1)");
  return map_formula(r, tetra_directions()[static_cast<size_t>(i)], -a);
}

std::array<double, 4> ifs_probs(const Vec3& r, double a) {
  if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("fuzziness must lie in (0, 1]");
  std::array<double, 4> p{};
  const double den = 4.0 * (1.0 + a * a);
  for (size_t i = 0; i < 4; ++i) p[i] = (1.0 + a * a + 2.0 * a * r.dot(tetra_directions()[i])) / den;
  return p;
}

Eigen::Matrix2cd spin_jump_operator(int i, double a) {
  check_index(i);
  const Vec3& n = tetra_directions()[static_cast<size_t>(i)];
  Eigen::Matrix2cd sn;
  sn << n.z(), cplx(n.x(), -n.y()), cplx(n.x(), n.y()), -n.z();
  return (Eigen::Matrix2cd::Identity() + a * sn) / (2.0 * std::sqrt(1.0 + a * a));
}

Spinor spin_jump_equiv(const Spinor& psi, int i, double a) {
  const Spinor out = spin_jump_operator(i, a) * psi;
  return out / out.norm();
}

Vec3 bloch_vector(const Spinor& psi) {
  const double n2 = psi.squaredNorm();
  if (!(n2 > 0.0)) throw std::invalid_argument("zero spinor has no Bloch vector");
  const cplx c = std::conj(psi[0]) * psi[1];
  return Vec3(2.0 * c.real(), 2.0 * c.imag(), std::norm(psi[0]) - std::norm(psi[1])) / n2;
}

Spinor spinor_from_bloch(const Vec3& r) {
  const Vec3 u = r.normalized();
  const double up = std::sqrt(std::max(0.0, 0.5 * (1.0 + u.z())));
  const double down = std::sqrt(std::max(0.0, 0.5 * (1.0 - u.z())));
  const double rho = std::hypot(u.x(), u.y());
  const cplx phase = rho > 0.0 ? cplx(u.x() / rho, u.y() / rho) : cplx(1.0, 0.0);
  return Spinor(up, down * phase);
}

std::vector<Vec3> chaos_game(const Vec3& r0, double a, std::int64_t n, std::uint64_t seed, int burn_in) {
  if (n < 1) throw std::invalid_argument("chaos game needs n >= 1");
  Rng rng(seed);
  Vec3 r = r0.normalized();
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n));
  for (std::int64_t k = 0; k < n + burn_in; ++k) {
    r = ifs_map(r, pick(ifs_probs(r, a), rng.uniform()), a);
    if (k >= burn_in) out.push_back(r);
  }
  return out;
}

std::vector<Vec3> chaos_endpoints(const Vec3& r0, double a, int chains, double mean_jumps, std::uint64_t seed) {
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    Rng rng(split_seed(seed, static_cast<std::uint64_t>(c)));
    std::poisson_distribution<int> jumps(mean_jumps);
    const int k = jumps(rng);
    Vec3 r = r0.normalized();
    for (int j = 0; j < k; ++j) r = ifs_map(r, pick(ifs_probs(r, a), rng.uniform()), a);
    out.push_back(r);
  }
  return out;
}

SphereMeasure SphereMeasure::uniform(int nside) {
  SphereMeasure m{SphereGrid(nside), {}};
  m.mass.assign(static_cast<size_t>(m.grid.size()), 1.0 / static_cast<double>(m.grid.size()));
  return m;
}

SphereMeasure SphereMeasure::point(int nside, const Vec3& r) {
  SphereMeasure m{SphereGrid(nside), {}};
  m.mass.assign(static_cast<size_t>(m.grid.size()), 0.0);
  m.mass[static_cast<size_t>(m.grid.pixel(r))] = 1.0;
  return m;
}

double SphereMeasure::total() const {
  double s = 0.0;
  for (double v : mass) s += v;
  return s;
}

double l1_distance(const SphereMeasure& a, const SphereMeasure& b) {
  if (a.mass.size() != b.mass.size()) throw std::invalid_argument("measures live on different grids");
  double s = 0.0;
  for (size_t i = 0; i < a.mass.size(); ++i) s += std::abs(a.mass[i] - b.mass[i]);
  return s;
}

MarkovOperator::MarkovOperator(int nside, double a, int samples_per_cell) : nside_(nside) {
  if (samples_per_cell < 1) throw std::invalid_argument("samples per cell must be >= 1");
  int level = 0;
  for (int k = samples_per_cell; k > 1; k /= 4) {
    if (k % 4 != 0) throw std::invalid_argument("samples per cell must be a power of 4");
    ++level;
  }
  const SphereGrid coarse(nside);
  const SphereGrid fine(nside << level);
  const double w = 1.0 / samples_per_cell;
  std::vector<int> per_cell(static_cast<size_t>(coarse.size()), 0);
  entries_.reserve(static_cast<size_t>(fine.size()) * 4);
  for (std::int64_t f = 0; f < fine.size(); ++f) {
    const Vec3 s = fine.center(f);
    const std::int64_t from = coarse.pixel(s);
    ++per_cell[static_cast<size_t>(from)];
    const auto p = ifs_probs(s, a);
    for (int i = 0; i < 4; ++i)
      entries_.push_back({from, coarse.pixel(ifs_map(s, i, a)), w * p[static_cast<size_t>(i)]});
  }
  for (int c : per_cell)
    if (c != samples_per_cell) throw NumericalError("sub-cell sampling is unbalanced");
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& x, const Entry& y) { return x.from != y.from ? x.from < y.from : x.to < y.to; });
  std::vector<Entry> merged;
  for (const auto& e : entries_) {
    if (!merged.empty() && merged.back().from == e.from && merged.back().to == e.to)
      merged.back().weight += e.weight;
    else
      merged.push_back(e);
  }
  entries_ = std::move(merged);
}

SphereMeasure MarkovOperator::apply(const SphereMeasure& mu) const {
  if (mu.grid.nside() != nside_) throw std::invalid_argument("measure resolution does not match the operator");
  SphereMeasure out{mu.grid, std::vector<double>(mu.mass.size(), 0.0)};
  for (const auto& e : entries_) out.mass[static_cast<size_t>(e.to)] += mu.mass[static_cast<size_t>(e.from)] * e.weight;
  return out;
}

SphereMeasure markov_step(const SphereMeasure& mu, double a, int samples_per_cell) {
  return MarkovOperator(mu.grid.nside(), a, samples_per_cell).apply(mu);
}

std::vector<double> log_scales(double lo, double hi, int n) {
  if (!(lo > 0 && hi > lo && n >= 2)) throw std::invalid_argument("invalid scale range");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return out;
}

DimensionFit box_counting_dimension(const std::vector<Vec3>& points, const std::vector<double>& scales) {
  if (points.size() < 100000) throw std::invalid_argument("box counting needs at least 1e5 points");
  const double unit = std::sqrt(std::numbers::pi / 3.0);
  std::vector<int> nsides;
  for (double eps : scales) {
    if (!(eps > 0)) throw std::invalid_argument("scales must be positive");
    nsides.push_back(std::max(1, static_cast<int>(std::lround(unit / eps))));
  }
  std::sort(nsides.begin(), nsides.end());
  nsides.erase(std::unique(nsides.begin(), nsides.end()), nsides.end());
  if (nsides.size() < 4) throw std::invalid_argument("box counting needs at least 4 distinct scales");
  if (static_cast<double>(nsides.back()) / nsides.front() < 9.999)
    throw std::invalid_argument("box counting scales must span at least one decade");

  DimensionFit fit;
  fit.degenerate = std::all_of(points.begin(), points.end(),
                               [&](const Vec3& p) { return (p - points.front()).norm() < 1e-12; });
  std::vector<double> xs, ys;
  for (auto it = nsides.rbegin(); it != nsides.rend(); ++it) {
    const SphereGrid grid(*it);
    std::vector<std::uint8_t> hit(static_cast<size_t>(grid.size()), 0);
    std::int64_t count = 0;
    for (const auto& p : points) {
      auto& h = hit[static_cast<size_t>(grid.pixel(p))];
      count += h == 0;
      h = 1;
    }
    const double eps = unit / *it;
    fit.scales.push_back(eps);
    fit.counts.push_back(count);
    xs.push_back(std::log(1.0 / eps));
    ys.push_back(std::log(static_cast<double>(count)));
  }
  if (fit.degenerate) return fit;
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.dimension = sxy / sxx;
  fit.intercept = my - fit.dimension * mx;
  double ss = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.dimension * xs[i]);
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / n);
  fit.r_squared = syy > 0 ? 1.0 - ss / syy : 1.0;
  return fit;
}

const std::vector<Eigen::Matrix3d>& tetrahedral_rotations() {
  static const std::vector<Eigen::Matrix3d> group = [] {
    const auto& n = tetra_directions();
    const double third = 2.0 * std::numbers::pi / 3.0;
    const std::vector<Eigen::Matrix3d> gens{Eigen::AngleAxisd(third, n[0]).toRotationMatrix(),
                                            Eigen::AngleAxisd(third, n[1]).toRotationMatrix()};
    std::vector<Eigen::Matrix3d> out{Eigen::Matrix3d::Identity()};
    for (size_t k = 0; k < out.size(); ++k)
      for (const auto& g : gens) {
        const Eigen::Matrix3d c = g * out[k];
        const bool seen = std::any_of(out.begin(), out.end(), [&](const Eigen::Matrix3d& m) { return (m - c).norm() < 1e-9; });
        if (!seen) out.push_back(c);
      }
    return out;
  }();
  return group;
}

double cap_mass(const SphereMeasure& mu, const Vec3& center, double radius) {
  const Vec3 c = center.normalized();
  const double cos_r = std::cos(radius);
  double s = 0.0;
  for (std::int64_t p = 0; p < mu.grid.size(); ++p)
    if (mu.grid.center(p).dot(c) >= cos_r) s += mu.mass[static_cast<size_t>(p)];
  return s;
}

double symmetry_spread(const SphereMeasure& mu, const Vec3& center, double radius) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  double sum = 0.0;
  const auto& group = tetrahedral_rotations();
  for (const auto& r : group) {
    const double m = cap_mass(mu, r * center, radius);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    sum += m;
  }
  const double mean = sum / static_cast<double>(group.size());
  return mean > 0 ? (hi - lo) / mean : 0.0;
}

std::vector<SymmetryProbe> tetrahedral_symmetry_probes(const SphereMeasure& mu) {
  const auto& n = tetra_directions();
  const Vec3 edge = (n[0] + n[1]).normalized();
  std::vector<SymmetryProbe> out;
  for (double r : {0.2, 0.5}) {
    out.push_back({"vertex cap r=" + std::to_string(r).substr(0, 3), symmetry_spread(mu, n[0], r)});
    out.push_back({"antipode cap r=" + std::to_string(r).substr(0, 3), symmetry_spread(mu, -n[0], r)});
  }
  for (double r : {0.3, 0.5}) out.push_back({"edge cap r=" + std::to_string(r).substr(0, 3), symmetry_spread(mu, edge, r)});
  std::array<double, 4> quarter{};
  for (std::int64_t p = 0; p < mu.grid.size(); ++p) {
    const Vec3 c = mu.grid.center(p);
    size_t best = 0;
    for (size_t i = 1; i < 4; ++i)
      if (c.dot(n[i]) > c.dot(n[best])) best = i;
    quarter[best] += mu.mass[static_cast<size_t>(p)];
  }
  const auto [lo, hi] = std::minmax_element(quarter.begin(), quarter.end());
  out.push_back({"vertex quarters", (*hi - *lo) / 0.25 / mu.total()});
  return out;
}

std::vector<double> hemisphere_grid(const SphereMeasure& mu, int size) {
  if (size < 1) throw std::invalid_argument("grid size must be positive");
  std::vector<double> out(static_cast<size_t>(size) * size, 0.0);
  const double area = mu.grid.cell_area();
  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) {
      const double x = -1.0 + (col + 0.5) * 2.0 / size;
      const double y = 1.0 - (row + 0.5) * 2.0 / size;
      const double rr = x * x + y * y;
      if (rr >= 1.0) continue;
      const Vec3 p(x, y, std::sqrt(1.0 - rr));
      out[static_cast<size_t>(row) * size + col] = mu.mass[static_cast<size_t>(mu.grid.pixel(p))] / area;
    }
  return out;
}

std::shared_ptr<const HybridModel> spin_pdp_model(double a) {
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("fuzziness must lie in (0, 1)");
  ModelSpec spec;
  for (int l = 0; l < 16; ++l) {
    std::string name = "b";
    for (int bit = 3; bit >= 0; --bit) name += ((l >> bit) & 1) ? '1' : '0';
    spec.labels.push_back(name);
    spec.spaces.push_back(FiniteSpace{2});
    spec.hamiltonians.push_back(Matrix(Matrix::Zero(2, 2)));
  }
  for (int l = 0; l < 16; ++l)
    for (int i = 0; i < 4; ++i) spec.jumps.push_back({l, l ^ (1 << i), Matrix(spin_jump_operator(i, a)), std::nullopt});
  return std::make_shared<const HybridModel>(build_model(std::move(spec)));
}

}  // namespace eeqt
