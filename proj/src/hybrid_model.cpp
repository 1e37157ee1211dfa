#include "eeqt/hybrid_model.hpp"

#include <cmath>
#include <set>

namespace eeqt {

namespace {

constexpr double kHermitianTol = 1e-12;

const GridSpace& as_grid(const QuantumSpace& s) { return std::get<GridSpace>(s); }

void check_axis(const Axis& a, const std::string& what) {
  if (a.n < 2 || !(a.max > a.min))
    throw ModelError(what + ": grid needs at least 2 points and max > min");
}

bool same_spacing(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

int aligned_offset(const Axis& from, const Axis& to, const std::string& what) {
  const double steps = (from.min - to.min) / to.spacing();
  const double r = std::round(steps);
  if (std::abs(steps - r) > 1e-6) throw ModelError(what + ": grids of source and target are not aligned");
  return static_cast<int>(r);
}

}  // namespace

int space_size(const QuantumSpace& space) {
  return std::visit(
      [](const auto& s) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, FiniteSpace>)
          return s.dim;
        else
          return s.size();
      },
      space);
}

bool is_grid(const QuantumSpace& space) { return std::holds_alternative<GridSpace>(space); }

int HybridModel::label_id(const std::string& name) const {
  for (const auto& l : labels_)
    if (l.name == name) return l.id;
  throw ModelError("unknown classical label '" + name + "'");
}

HybridModel build_model(ModelSpec spec) {
  const int k = static_cast<int>(spec.labels.size());
  if (k == 0) throw ModelError("model declares no classical labels");
  if (static_cast<int>(spec.spaces.size()) != k || static_cast<int>(spec.hamiltonians.size()) != k)
    throw ModelError("one space and one Hamiltonian per label are required");

  HybridModel m;
  m.units_ = spec.units;
  std::set<std::string> names;
  for (int a = 0; a < k; ++a) {
    if (!names.insert(spec.labels[static_cast<size_t>(a)]).second)
      throw ModelError("duplicate label name '" + spec.labels[static_cast<size_t>(a)] + "'");
    m.labels_.push_back({a, spec.labels[static_cast<size_t>(a)]});
  }

  for (int a = 0; a < k; ++a) {
    const auto& name = spec.labels[static_cast<size_t>(a)];
    const auto& space = spec.spaces[static_cast<size_t>(a)];
    const auto& ham = spec.hamiltonians[static_cast<size_t>(a)];
    if (const auto* f = std::get_if<FiniteSpace>(&space)) {
      if (f->dim < 1) throw ModelError(name + ": finite space dimension must be >= 1");
      const auto* h = std::get_if<Matrix>(&ham);
      if (!h) throw ModelError(name + ": finite space needs a matrix Hamiltonian");
      if (h->rows() != f->dim || h->cols() != f->dim) throw ModelError(name + ": Hamiltonian shape mismatch");
      if (h->size() > 0 && (*h - h->adjoint()).cwiseAbs().maxCoeff() >= kHermitianTol)
        throw ModelError(name + ": Hamiltonian is not Hermitian");
    } else {
      const auto& g = as_grid(space);
      check_axis(g.x, name);
      if (g.y) check_axis(*g.y, name);
      const auto* v = std::get_if<RealVector>(&ham);
      if (!v) throw ModelError(name + ": grid space needs a potential profile");
      if (v->size() != g.size()) throw ModelError(name + ": potential length does not match grid");
    }
  }

  m.jumps_from_.assign(static_cast<size_t>(k), {});
  for (size_t j = 0; j < spec.jumps.size(); ++j) {
    const auto& jump = spec.jumps[j];
    const std::string what = "jump #" + std::to_string(j);
    if (jump.source < 0 || jump.source >= k || jump.target < 0 || jump.target >= k)
      throw ModelError(what + ": references an undeclared label");
    if (jump.source == jump.target) throw ModelError(what + ": diagonal jump (source == target) is not allowed");
    const auto& src = spec.spaces[static_cast<size_t>(jump.source)];
    const auto& dst = spec.spaces[static_cast<size_t>(jump.target)];
    std::pair<int, int> offset{0, 0};
    if (const auto* g = std::get_if<Matrix>(&jump.op)) {
      if (is_grid(src) || is_grid(dst)) throw ModelError(what + ": matrix jump between grid spaces");
      if (g->rows() != space_size(dst) || g->cols() != space_size(src))
        throw ModelError(what + ": operator shape does not match source/target spaces");
    } else {
      const auto& prof = std::get<std::shared_ptr<const GridProfile>>(jump.op);
      if (!prof) throw ModelError(what + ": null grid profile");
      if (!is_grid(src) || !is_grid(dst)) throw ModelError(what + ": grid profile on a finite space");
      const auto& gs = as_grid(src);
      const auto& gt = as_grid(dst);
      if (gs.dims() != gt.dims() || !same_spacing(gs.x.spacing(), gt.x.spacing()) ||
          (gs.y && !same_spacing(gs.y->spacing(), gt.y->spacing())))
        throw ModelError(what + ": source and target grids differ in spacing or dimension");
      offset.first = aligned_offset(gs.x, gt.x, what);
      offset.second = gs.y ? aligned_offset(*gs.y, *gt.y, what) : 0;
      if (prof->values.size() != static_cast<size_t>(prof->nx) * prof->ny)
        throw ModelError(what + ": profile window size mismatch");
      if (prof->nx > 0) {
        if (prof->ix0 < 0 || prof->iy0 < 0 || prof->ix0 + prof->nx > gs.nx() || prof->iy0 + prof->ny > gs.ny())
          throw ModelError(what + ": profile window outside the source grid");
        const int tx0 = prof->ix0 + offset.first;
        const int ty0 = prof->iy0 + offset.second;
        if (tx0 < 0 || ty0 < 0 || tx0 + prof->nx > gt.nx() || ty0 + prof->ny > gt.ny())
          throw ModelError(what + ": profile window does not fit in the target grid");
      }
      for (double v : prof->values)
        if (!(v >= 0.0)) throw ModelError(what + ": grid profile must be real and non-negative");
    }
    m.jumps_from_[static_cast<size_t>(jump.source)].push_back(static_cast<int>(j));
    m.grid_offsets_.push_back(offset);
  }

  m.spaces_ = std::move(spec.spaces);
  m.hamiltonians_ = std::move(spec.hamiltonians);
  m.jumps_ = std::move(spec.jumps);
  for (int a = 0; a < k; ++a) m.lambdas_.push_back(lambda_op(m, a));
  return m;
}

DampingOperator lambda_op(const HybridModel& model, int label) {
  const auto& space = model.space(label);
  if (!is_grid(space)) {
    const int n = space_size(space);
    Matrix out = Matrix::Zero(n, n);
    for (int j : model.jumps_from(label)) {
      const auto& g = std::get<Matrix>(model.jumps()[static_cast<size_t>(j)].op);
      out.noalias() += g.adjoint() * g;
    }
    return out;
  }
  const auto& grid = as_grid(space);
  RealVector out = RealVector::Zero(grid.size());
  for (int j : model.jumps_from(label)) {
    const auto& p = *std::get<std::shared_ptr<const GridProfile>>(model.jumps()[static_cast<size_t>(j)].op);
    for (int iy = 0; iy < p.ny; ++iy)
      for (int ix = 0; ix < p.nx; ++ix) {
        const double v = p.values[static_cast<size_t>(iy) * p.nx + ix];
        out[(p.iy0 + iy) * grid.nx() + p.ix0 + ix] += v * v;
      }
  }
  return out;
}

Generator effective_generator(const HybridModel& model, int label) {
  const double hbar = model.units().hbar;
  const cplx i(0.0, 1.0);
  const auto& space = model.space(label);
  if (!is_grid(space)) {
    const auto& h = std::get<Matrix>(model.hamiltonian(label));
    const auto& lam = std::get<Matrix>(model.lambda(label));
    Matrix k = (-i / hbar) * h - 0.5 * lam;
    return k;
  }
  const auto& grid = as_grid(space);
  const auto& pot = std::get<RealVector>(model.hamiltonian(label));
  const auto& lam = std::get<RealVector>(model.lambda(label));
  const double c = model.units().hbar2_over_2m;
  const double dx = grid.x.spacing();
  double kin_diag = 2.0 * c / (dx * dx);
  GridGenerator gen;
  gen.off_x = i * c / (hbar * dx * dx);
  if (grid.y) {
    const double dy = grid.y->spacing();
    kin_diag += 2.0 * c / (dy * dy);
    gen.off_y = i * c / (hbar * dy * dy);
  }
  gen.diag.resize(grid.size());
  for (int n = 0; n < grid.size(); ++n) gen.diag[n] = (-i / hbar) * (kin_diag + pot[n]) - 0.5 * lam[n];
  return gen;
}

double norm2_in(const QuantumSpace& space, const Vector& psi) {
  const double s = psi.squaredNorm();
  return is_grid(space) ? s * as_grid(space).cell_volume() : s;
}

cplx inner_in(const QuantumSpace& space, const Vector& a, const Vector& b) {
  const cplx s = a.dot(b);
  return is_grid(space) ? s * as_grid(space).cell_volume() : s;
}

HybridPureState make_state(const HybridModel& model, int label, Vector psi) {
  if (psi.size() != space_size(model.space(label))) throw ModelError("state vector does not match the label's space");
  HybridPureState s{label, std::move(psi), 0.0};
  s.norm2 = norm2_in(model.space(label), s.psi);
  return s;
}

double damping_rate(const HybridModel& model, int label, const Vector& psi) {
  const auto& lam = model.lambda(label);
  if (const auto* m = std::get_if<Matrix>(&lam)) return psi.dot(*m * psi).real();
  const auto& d = std::get<RealVector>(lam);
  double s = 0.0;
  for (Eigen::Index n = 0; n < psi.size(); ++n) s += d[n] * std::norm(psi[n]);
  return s * as_grid(model.space(label)).cell_volume();
}

Vector apply_jump(const HybridModel& model, int jump_index, const Vector& psi) {
  const auto& jump = model.jumps()[static_cast<size_t>(jump_index)];
  if (const auto* g = std::get_if<Matrix>(&jump.op)) return *g * psi;
  const auto& p = *std::get<std::shared_ptr<const GridProfile>>(jump.op);
  const auto& src = as_grid(model.space(jump.source));
  const auto& dst = as_grid(model.space(jump.target));
  const auto [ox, oy] = model.grid_offset(jump_index);
  Vector out = Vector::Zero(dst.size());
  for (int iy = 0; iy < p.ny; ++iy)
    for (int ix = 0; ix < p.nx; ++ix) {
      const int sx = p.ix0 + ix;
      const int sy = p.iy0 + iy;
      out[(sy + oy) * dst.nx() + sx + ox] = p.values[static_cast<size_t>(iy) * p.nx + ix] * psi[sy * src.nx() + sx];
    }
  return out;
}

double jump_weight(const HybridModel& model, int jump_index, const Vector& psi) {
  const auto& jump = model.jumps()[static_cast<size_t>(jump_index)];
  if (const auto* g = std::get_if<Matrix>(&jump.op)) return (*g * psi).squaredNorm();
  const auto& p = *std::get<std::shared_ptr<const GridProfile>>(jump.op);
  const auto& src = as_grid(model.space(jump.source));
  double s = 0.0;
  for (int iy = 0; iy < p.ny; ++iy) {
    const cplx* row = psi.data() + static_cast<size_t>(p.iy0 + iy) * src.nx() + p.ix0;
    const double* v = p.values.data() + static_cast<size_t>(iy) * p.nx;
    for (int ix = 0; ix < p.nx; ++ix) s += v[ix] * v[ix] * std::norm(row[ix]);
  }
  return s * src.cell_volume();
}

}  // namespace eeqt
