#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "eeqt/units.hpp"

namespace eeqt {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Raised when a model description is inconsistent.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot continue.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform grid on [min, max] with n points, endpoints included.
struct Axis {
  double min = 0.0;
  double max = 0.0;
  int n = 0;

  double spacing() const { return n > 1 ? (max - min) / (n - 1) : 0.0; }
  double coord(int i) const { return min + i * spacing(); }
};

struct FiniteSpace {
  int dim = 0;
};

/// Position-space grid. One axis for 1D; a second axis for 2D. Flat index of
/// point (ix, iy) is iy * x.n + ix.
struct GridSpace {
  Axis x;
  std::optional<Axis> y;

  int dims() const { return y ? 2 : 1; }
  int nx() const { return x.n; }
  int ny() const { return y ? y->n : 1; }
  int size() const { return nx() * ny(); }
  double cell_volume() const { return x.spacing() * (y ? y->spacing() : 1.0); }
};

using QuantumSpace = std::variant<FiniteSpace, GridSpace>;

int space_size(const QuantumSpace& space);
bool is_grid(const QuantumSpace& space);

struct ClassicalLabel {
  int id = 0;
  std::string name;
};

/// Spatial tag of a detector-indexed jump (second coordinate is 0 in 1D).
struct Position {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Position&) const = default;
};

/// Real non-negative multiplication profile supported on an index window of a
/// grid. Values are stored row-major over the window (x fastest).
struct GridProfile {
  int ix0 = 0;
  int nx = 0;
  int iy0 = 0;
  int ny = 1;
  std::vector<double> values;

  double at(int ix, int iy) const { return values[static_cast<size_t>((iy - iy0) * nx + (ix - ix0))]; }
};

/// Profile built by evaluating `f` at every grid point and keeping the smallest
/// window that holds all values above `cutoff` (relative to the maximum).
template <class F>
GridProfile make_profile(const GridSpace& grid, F&& f, double cutoff = 0.0);

using JumpMap = std::variant<Matrix, std::shared_ptr<const GridProfile>>;

/// g_{target,source}: the quantum map accompanying the classical transition
/// source -> target.
struct JumpOperator {
  int source = 0;
  int target = 0;
  JumpMap op;
  std::optional<Position> tag;
};

/// Per-label Hamiltonian. Finite spaces carry a Hermitian matrix (eV); grid
/// spaces carry the real potential (eV) added to the kinetic term.
using Hamiltonian = std::variant<Matrix, RealVector>;

/// Declarative model description, validated by build_model.
struct ModelSpec {
  std::vector<std::string> labels;
  std::vector<QuantumSpace> spaces;
  std::vector<Hamiltonian> hamiltonians;
  std::vector<JumpOperator> jumps;
  Units units;
};

/// Lambda_alpha: a matrix for finite spaces, a diagonal profile for grids.
using DampingOperator = std::variant<Matrix, RealVector>;

/// Finite-difference representation of K = -iH/hbar - Lambda/2 on a grid:
/// K psi_i = diag_i psi_i + off_x (psi_{i-1} + psi_{i+1}) [+ off_y along y].
struct GridGenerator {
  Vector diag;
  cplx off_x{0.0, 0.0};
  cplx off_y{0.0, 0.0};
};

using Generator = std::variant<Matrix, GridGenerator>;

class HybridModel {
 public:
  int num_labels() const { return static_cast<int>(labels_.size()); }
  const ClassicalLabel& label(int id) const { return labels_.at(static_cast<size_t>(id)); }
  /// Throws ModelError for unknown names.
  int label_id(const std::string& name) const;

  const QuantumSpace& space(int id) const { return spaces_.at(static_cast<size_t>(id)); }
  const Hamiltonian& hamiltonian(int id) const { return hamiltonians_.at(static_cast<size_t>(id)); }
  const DampingOperator& lambda(int id) const { return lambdas_.at(static_cast<size_t>(id)); }
  const std::vector<JumpOperator>& jumps() const { return jumps_; }
  /// Indices into jumps() of the operators leaving `id`, in declaration order.
  const std::vector<int>& jumps_from(int id) const { return jumps_from_.at(static_cast<size_t>(id)); }
  bool has_jumps_from(int id) const { return !jumps_from(id).empty(); }
  const Units& units() const { return units_; }

  /// Index shift (source index -> target index) of a grid jump.
  std::pair<int, int> grid_offset(int jump_index) const { return grid_offsets_.at(static_cast<size_t>(jump_index)); }

 private:
  friend HybridModel build_model(ModelSpec spec);

  std::vector<ClassicalLabel> labels_;
  std::vector<QuantumSpace> spaces_;
  std::vector<Hamiltonian> hamiltonians_;
  std::vector<JumpOperator> jumps_;
  std::vector<std::vector<int>> jumps_from_;
  std::vector<std::pair<int, int>> grid_offsets_;
  std::vector<DampingOperator> lambdas_;
  Units units_;
};

/// Validate a description and precompute the damping operators.
///
/// Rejects non-Hermitian Hamiltonians, diagonal jumps (source == target),
/// undeclared labels, degenerate spaces and operator/space shape mismatches.
HybridModel build_model(ModelSpec spec);

/// Sum over jumps leaving `label` of g^dagger g.
DampingOperator lambda_op(const HybridModel& model, int label);

/// K_alpha = -i H_alpha / hbar - Lambda_alpha / 2.
Generator effective_generator(const HybridModel& model, int label);

/// Classical label plus a (possibly unnormalized) state vector of that
/// label's space, with its squared norm cached.
struct HybridPureState {
  int label = 0;
  Vector psi;
  double norm2 = 0.0;
};

/// Squared norm with the space's measure (dx weight on grids).
double norm2_in(const QuantumSpace& space, const Vector& psi);

/// <a, b> with the space's measure.
cplx inner_in(const QuantumSpace& space, const Vector& a, const Vector& b);

/// State with norm2 filled in.
HybridPureState make_state(const HybridModel& model, int label, Vector psi);

/// (psi, Lambda_label psi) with the space's measure.
double damping_rate(const HybridModel& model, int label, const Vector& psi);

/// g_j psi, expressed in the target label's space.
Vector apply_jump(const HybridModel& model, int jump_index, const Vector& psi);

/// ||g_j psi||^2 in the target space, without materializing g_j psi for grids.
double jump_weight(const HybridModel& model, int jump_index, const Vector& psi);

template <class F>
GridProfile make_profile(const GridSpace& grid, F&& f, double cutoff) {
  const int nx = grid.nx();
  const int ny = grid.ny();
  std::vector<double> full(static_cast<size_t>(nx) * ny);
  double peak = 0.0;
  for (int iy = 0; iy < ny; ++iy) {
    const double y = grid.y ? grid.y->coord(iy) : 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      const double v = f(grid.x.coord(ix), y);
      if (!(v >= 0.0)) throw ModelError("grid jump profiles must be real and non-negative");
      full[static_cast<size_t>(iy) * nx + ix] = v;
      peak = std::max(peak, v);
    }
  }
  GridProfile out;
  const double keep = cutoff * peak;
  int x_lo = nx, x_hi = -1, y_lo = ny, y_hi = -1;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix)
      if (full[static_cast<size_t>(iy) * nx + ix] > keep) {
        x_lo = std::min(x_lo, ix);
        x_hi = std::max(x_hi, ix);
        y_lo = std::min(y_lo, iy);
        y_hi = std::max(y_hi, iy);
      }
  if (x_hi < 0) {
    out.ix0 = 0;
    out.nx = 0;
    out.iy0 = 0;
    out.ny = 0;
    return out;
  }
  out.ix0 = x_lo;
  out.nx = x_hi - x_lo + 1;
  out.iy0 = y_lo;
  out.ny = y_hi - y_lo + 1;
  out.values.reserve(static_cast<size_t>(out.nx) * out.ny);
  for (int iy = y_lo; iy <= y_hi; ++iy)
    for (int ix = x_lo; ix <= x_hi; ++ix) {
      const double v = full[static_cast<size_t>(iy) * nx + ix];
      out.values.push_back(v > keep ? v : 0.0);
    }
  return out;
}

}  // namespace eeqt
