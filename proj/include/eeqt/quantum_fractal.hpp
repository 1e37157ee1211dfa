#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eeqt/hybrid_model.hpp"
#include "eeqt/sphere_grid.hpp"

namespace eeqt {

using Spinor = Eigen::Vector2cd;

/// Unit vectors at the vertices of a regular tetrahedron.
const std::array<Vec3, 4>& tetra_directions();

/// T_i r = [(1 - a^2) r + 2a(1 + a r.n_i) n_i] / (1 + a^2 + 2a r.n_i),
/// renormalized. `i` is 0-based; a must lie in (0, 1).
Vec3 ifs_map(const Vec3& r, int i, double a);
/// Inverse of T_i: the same formula at -a.
Vec3 ifs_map_inverse(const Vec3& r, int i, double a);

/// p_i(r) = (1 + a^2 + 2a r.n_i) / (4(1 + a^2)); a in (0, 1].
std::array<double, 4> ifs_probs(const Vec3& r, double a);

/// g_i = (I + a sigma.n_i) / (2 sqrt(1 + a^2)); sum_i g_i^dagger g_i = I.
Eigen::Matrix2cd spin_jump_operator(int i, double a);
/// g_i psi / ||g_i psi||.
Spinor spin_jump_equiv(const Spinor& psi, int i, double a);

/// (<sigma_x>, <sigma_y>, <sigma_z>) of a normalized spinor.
Vec3 bloch_vector(const Spinor& psi);
/// A spinor with the given Bloch vector (phase chosen so the first component
/// is real and non-negative).
Spinor spinor_from_bloch(const Vec3& r);

/// Chaos-game orbit r_{k+1} = T_{i_k} r_k with i_k drawn from p(r_k); the
/// first `burn_in` points are discarded.
std::vector<Vec3> chaos_game(const Vec3& r0, double a, std::int64_t n, std::uint64_t seed, int burn_in = 100);

/// Final points of independent chains started at r0, each of Poisson(mean_jumps)
/// length. Matches the law of the spin PDP at time mean_jumps (Lambda = I).
std::vector<Vec3> chaos_endpoints(const Vec3& r0, double a, int chains, double mean_jumps, std::uint64_t seed);

/// Probability measure over the cells of a SphereGrid.
struct SphereMeasure {
  SphereGrid grid{1};
  std::vector<double> mass;

  static SphereMeasure uniform(int nside);
  static SphereMeasure point(int nside, const Vec3& r);
  double total() const;
};

double l1_distance(const SphereMeasure& a, const SphereMeasure& b);

/// Push-forward of cell masses under the IFS. Each cell is represented by the
/// centers of its K = 4^m sub-cells, each carrying mass/K, so the transition
/// table is built once and reused.
class MarkovOperator {
 public:
  MarkovOperator(int nside, double a, int samples_per_cell = 16);

  int nside() const { return nside_; }
  SphereMeasure apply(const SphereMeasure& mu) const;

 private:
  struct Entry {
    std::int64_t from;
    std::int64_t to;
    double weight;
  };
  int nside_;
  std::vector<Entry> entries_;
};

SphereMeasure markov_step(const SphereMeasure& mu, double a, int samples_per_cell = 16);

struct DimensionFit {
  double dimension = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
  double r_squared = 0.0;
  std::vector<double> scales;  // effective angular cell size per level
  std::vector<std::int64_t> counts;
  bool degenerate = false;
};

/// Log-spaced angular scales between lo and hi (radians).
std::vector<double> log_scales(double lo = 0.005, double hi = 0.1, int n = 9);

/// Least-squares slope of log N(eps) against log(1/eps), where N counts
/// occupied cells of the SphereGrid whose resolution is closest to eps.
/// Requires >= 4 distinct scales spanning a decade.
DimensionFit box_counting_dimension(const std::vector<Vec3>& points, const std::vector<double>& scales);

/// The 12 proper rotations mapping the tetrahedron onto itself.
const std::vector<Eigen::Matrix3d>& tetrahedral_rotations();

/// Mass of the cells whose centers lie within `radius` of `center`.
double cap_mass(const SphereMeasure& mu, const Vec3& center, double radius);
/// (max - min) / mean of cap masses over the 12 rotated images of the cap.
double symmetry_spread(const SphereMeasure& mu, const Vec3& center, double radius);

struct SymmetryProbe {
  std::string name;
  double spread = 0.0;  // (max - min) / mean over the symmetry orbit
};

/// Symmetry-orbit spreads of caps centered on tetrahedron vertices, their
/// antipodes and edge midpoints, plus the masses of the four vertex Voronoi
/// cells. Probes are centered on symmetric points so cap boundaries cut the
/// measure identically in every image.
std::vector<SymmetryProbe> tetrahedral_symmetry_probes(const SphereMeasure& mu);

/// Density (mass / cell area) on a size x size grid over the orthographic
/// view of the upper hemisphere; zero outside the unit disk. Row-major, row 0
/// at y = +1.
std::vector<double> hemisphere_grid(const SphereMeasure& mu, int size);

/// Spin PDP realizing the IFS: 16 labels (one bit per direction), jump i
/// flips bit i and applies g_i; H = 0, so Lambda = I in every label.
std::shared_ptr<const HybridModel> spin_pdp_model(double a);

}  // namespace eeqt
