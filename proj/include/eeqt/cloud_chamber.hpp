#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "eeqt/master_equation.hpp"
#include "eeqt/pdp_engine.hpp"

namespace eeqt {

/// Field of two-state detectors with Gaussian sensitivities
///   g_a(x) = sqrt(lambda/2) (1/(w sqrt(2 pi)))^{D/2} exp(-|x - a|^2 / (4 w^2)),
/// so that sum_a g_a(x)^2 * cell_volume -> lambda/2 for a dense lattice.
struct DetectorMedium {
  int dimension = 1;
  double width = 1.0;         // w, Angstrom
  double lambda = 1.0;        // total rate, 1/fs
  double cell_volume = 1.0;   // quadrature weight per site, Angstrom^D
  double cutoff = 1e-8;       // profiles truncated below cutoff * peak
  std::vector<Position> sites;

  double profile(const Position& site, double x, double y) const;
};

struct MediumConfig {
  double width = 1.0;
  double lambda = 1.0;
  /// Lattice pitch; 0 means pitch = width.
  double pitch = 0.0;
  /// Explicit sites replace the lattice when non-empty.
  std::vector<Position> sites;
  /// Quadrature weight of explicit sites; 0 means pitch^D.
  double site_cell_volume = 0.0;
  /// Profiles are truncated where g_a < cutoff * peak.
  double cutoff = 1e-8;
};

/// Homogeneous lattice over the grid's extent (or the explicit site list).
DetectorMedium make_medium(const MediumConfig& cfg, const GridSpace& grid);

/// Particle coupled to the medium. The flip set itself is recorded in the
/// event tags; the classical label only tracks the parity of the number of
/// flips, which is all the quantum dynamics needs.
struct CloudChamber {
  DetectorMedium medium;
  GridSpace grid;
  std::shared_ptr<const HybridModel> model;
  int even = 0;
  int odd = 1;
};

CloudChamber build_cloud_chamber(const DetectorMedium& medium, const GridSpace& grid, const Units& units = {});

/// Normalized Gaussian packet exp(-|x - x0|^2 / (4 sigma^2) + i k.x) on the grid
/// (sigma is the position standard deviation of |psi|^2).
struct PacketSpec {
  double x0 = 0.0;
  double y0 = 0.0;
  double sigma = 1.0;
  double kx = 0.0;
  double ky = 0.0;
};
Vector gaussian_packet(const GridSpace& grid, const PacketSpec& packet);

/// p(a; psi) = ||g_a psi||^2 / (psi, Lambda psi), one weight per site.
std::vector<double> flip_position_distribution(const CloudChamber& chamber, const Vector& psi);

struct Flip {
  double time = 0.0;
  Position site;
};
using FlipSet = std::vector<Flip>;

FlipSet flip_set(const TrajectoryRecord& record);

struct Track {
  FlipSet flips;
  TrajectoryRecord record;
};

Track run_track(const PdpEngine& engine, const Vector& psi0, double t_cut, std::uint64_t seed);

/// Direction of motion along a track: least-squares slopes of x(t) and y(t),
/// returned as the angle to +x (radians). Needs >= 2 flips at distinct times.
double track_angle(const FlipSet& flips);

/// Position mean and variance of a grid state (x only in 1D).
struct Moments2 {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var = 0.0;  // var_x + var_y
};
Moments2 position_moments(const GridSpace& grid, const Vector& psi);

/// Effective equation for rho-hat = rho_even + rho_odd on a 1D grid:
///   d rho/dt = -i[H, rho]/hbar + sum_a g_a rho g_a - {Lambda, rho}/2.
/// rho is the matrix psi psi^dagger dx (unit trace).
Matrix grw_effective_rhs(const CloudChamber& chamber, const Matrix& rho);

/// RK4 of grw_effective_rhs; states at each sample time.
std::vector<Matrix> integrate_grw(const CloudChamber& chamber, const Matrix& rho0, double t_end, double dt,
                                  const std::vector<double>& sample_times);

/// Histogram over sites of first-flip positions in n single-flip experiments,
/// normalized to unit sum. Each experiment couples psi to the medium for
/// delta_t and stops at the first flip.
std::vector<double> born_limit_histogram(const CloudChamber& chamber, const Vector& psi, int n_samples,
                                         std::uint64_t seed, double delta_t, double dt, int workers = 1);

/// |psi(a)|^2 dx at the site positions (sites must be grid points).
std::vector<double> born_weights(const CloudChamber& chamber, const Vector& psi);

/// Ensemble of tracks versus the effective equation on a 1D grid: position
/// mean, second moment and purity of rho-hat at each sample time.
struct GrwCheckConfig {
  int n_points = 64;
  double x_min = -20.0;
  double x_max = 20.0;
  double width = 2.0;
  double lambda = 2.0;
  /// Initial state: equal superposition of two packets at +-separation/2.
  double separation = 10.0;
  double sigma = 1.5;
  double k = 0.3;
  double t_end = 2.0;
  double dt = 0.002;
  double rk4_dt = 0.002;
  int samples = 11;
  int trajectories = 10000;
  double n_sigma = 5.0;
};

struct GrwCheckResult {
  std::vector<double> times;
  std::vector<std::string> names;  // "x", "x2", "purity"
  std::vector<std::vector<double>> pdp;   // [time][observable]
  std::vector<std::vector<double>> se;
  std::vector<std::vector<double>> exact;
  double max_sigma = 0.0;
  bool pass = false;
};

GrwCheckResult run_grw_check(const GrwCheckConfig& cfg, std::uint64_t seed, int workers = 1);

/// 2D tracks of a packet moving along +x.
struct TrackConfig {
  int nx = 192;
  int ny = 96;
  double dx = 0.4;
  double width = 4.0;
  double lambda = 4.0;
  double cutoff = 1e-4;
  double sigma = 4.0;
  double k = 1.2;
  double t_cut = 4.5;
  double dt = 0.01;
  int tracks = 100;
  int min_flips = 5;
  /// Safety bound on attempts to collect `tracks` qualifying tracks.
  int max_attempts = 1000;
  double max_mean_deviation_deg = 15.0;
};

struct TrackResult {
  std::vector<Track> tracks;       // qualifying tracks, in seed order
  std::vector<double> angles_deg;  // fitted direction per qualifying track
  int attempts = 0;
  double mean_abs_deviation_deg = 0.0;
  bool pass = false;
};

CloudChamber track_chamber(const TrackConfig& cfg);
Vector track_packet(const CloudChamber& chamber, const TrackConfig& cfg);
TrackResult run_track_experiment(const TrackConfig& cfg, std::uint64_t seed, int workers = 1);

/// First-flip histogram versus |psi(a)|^2 dx on a 1D grid.
struct BornConfig {
  int n_points = 128;
  double x_min = -16.0;
  double x_max = 16.0;
  double lambda = 1000.0;
  double delta_t = 0.05;
  double dt = 1e-4;
  int samples = 100000;
  double max_l1 = 0.05;
};

struct BornResult {
  std::vector<Position> sites;
  std::vector<double> histogram;
  std::vector<double> born;
  double l1 = 0.0;
  double unflipped_fraction = 0.0;
  bool pass = false;
};

BornResult run_born_check(const BornConfig& cfg, std::uint64_t seed, int workers = 1);

}  // namespace eeqt
