#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eeqt/pdp_engine.hpp"

namespace eeqt {

/// Square barrier V0 on [0, d].
struct Barrier {
  double v0 = 10.0;  // eV
  double d = 5.0;    // Angstrom
};

enum class DetectorShape {
  /// G^2 = W0/hbar on |x - x_i| <= dx_i, with a one-cell linear edge.
  Box,
  /// G = sqrt(W0/hbar) exp(-(x - x_i)^2 / (2 dx_i^2)).
  Gaussian,
};

struct Detector {
  double x = 0.0;      // center, Angstrom
  double width = 1.0;  // half-width (Box) or standard deviation (Gaussian), Angstrom
  double w0 = 0.0;     // strength, eV
};

/// Gaussian packet; eta is the position standard deviation of |psi|^2.
struct TunnelPacket {
  double x0 = -250.0;
  double eta = 12.5;
  double e0 = 5.0;
};

struct TunnelNumerics {
  double dx = 0.25;
  double dt = 0.01;
  double t_cut = 400.0;
  DetectorShape shape = DetectorShape::Box;
  /// Free space kept between the outermost feature and an absorber.
  double margin = 10.0;
  /// Quadratic absorbing layers at both grid ends, modeled as jumps to the
  /// ESCAPED label; strength 0 disables them.
  double absorber_length = 40.0;
  double absorber_strength = 5.0;  // peak rate, 1/fs
  /// Packet tails kept on the grid, in units of eta.
  double packet_span = 8.0;
};

struct TunnelSetup {
  Barrier barrier;
  Detector d1{-12.5, 12.5, 0.16};
  Detector d2{10.0, 5.0, 2.56};
  TunnelPacket packet;
  TunnelNumerics numerics;
};

/// Labels WAIT -> PRIMED -> {REFL, TRANS}, plus ESCAPED for flux leaving the
/// domain. WAIT and ESCAPED live on the full grid; PRIMED, REFL and TRANS on a
/// window around the detectors.
struct TunnelModel {
  TunnelSetup setup;
  std::shared_ptr<const HybridModel> model;
  HybridPureState initial;
  GridSpace wait_grid;
  GridSpace primed_grid;
  int wait = 0;
  int primed = 1;
  int refl = 2;
  int trans = 3;
  int escaped = 4;
};

/// Throws std::invalid_argument for detectors or the packet outside the
/// absorber-free part of the domain, or non-positive widths.
TunnelModel build_tunnel_model(const TunnelSetup& setup, const Units& units = {});

/// Detector profile G(x) (amplitude, 1/sqrt(fs)) on a grid.
RealVector detector_profile(const Detector& det, DetectorShape shape, const GridSpace& grid, const Units& units);

enum class OutcomeKind { Reflected, Transmitted, NoFirstEvent, OneEventOnly };

struct TunnelOutcome {
  OutcomeKind kind = OutcomeKind::NoFirstEvent;
  double t0 = 0.0;    // first D1 event (NaN without one)
  double t_end = 0.0; // second event (NaN without one)
  /// t_end - t0 for reflected and transmitted runs.
  double duration() const { return t_end - t0; }
};

/// Classify one record of the tunnel model.
TunnelOutcome classify(const TunnelModel& tm, const TrajectoryRecord& record);

struct TunnelStats {
  int n = 0;
  int reflected = 0;
  int transmitted = 0;
  int no_first_event = 0;
  int one_event_only = 0;
  /// NaN mean and se when the corresponding count is 0.
  TimeStat tau_r;
  TimeStat tau_t;
  double censored_fraction() const { return n ? double(no_first_event + one_event_only) / n : 0.0; }
};

TunnelStats run_tunnel_experiment(const TunnelModel& tm, int n, std::uint64_t master_seed, int workers = 1,
                                  std::vector<TunnelOutcome>* outcomes = nullptr);

// Comparison clocks for a plane wave of energy E (eV) on the square barrier.

struct Scattering {
  cplx t;  // transmitted amplitude, equal to exp(ikd) without barrier
  cplx r;  // reflected amplitude at x = 0
};

/// Throws std::invalid_argument for E <= 0. Continuous through E = V0.
Scattering transmission_amplitude(double e, const Barrier& b, const Units& units = {});

/// d arg T / dE (1/eV), analytic.
double phase_derivative(double e, const Barrier& b, const Units& units = {});

/// Larmor components tau_y = -hbar d(arg T)/dV0, tau_z = -hbar d(ln|T|)/dV0, in fs.
struct LarmorTimes {
  double tau_y = 0.0;
  double tau_z = 0.0;
};
LarmorTimes larmor_components(double e, const Barrier& b, const Units& units = {});

/// Free flight m L / (hbar k) at energy E.
double free_flight_time(double e, double length, const Units& units = {});

/// hbar d(arg T)/dE plus free flight over [x1, 0] and [d, x2].
double phase_time(double e, const Barrier& b, double x1, double x2, const Units& units = {});

/// Classical flight over [x1, x2]: speed hbar k/m outside, hbar q/m inside for
/// E > V0 and m d/(hbar kappa) across the barrier for E < V0. Throws
/// std::domain_error at E = V0 (within 1e-12 relative).
double semiclassical_time(double e, const Barrier& b, double x1, double x2, const Units& units = {});

/// sqrt(tau_y^2 + tau_z^2): traversal of the barrier region only.
double buttiker_larmor_time(double e, const Barrier& b, const Units& units = {});

/// Larmor time of the barrier plus free flight over [x1, 0] and [d, x2].
double buttiker_larmor_traversal(double e, const Barrier& b, double x1, double x2, const Units& units = {});

enum class Weighting { Momentum, Transmitted };

struct PacketAverage {
  double value = 0.0;
  /// Weight of the exclusion window around a singular energy (0 if none).
  double excluded_weight = 0.0;
};

struct PacketAverageOptions {
  int points = 4001;
  double span_sigma = 10.0;
  /// Energies with |E - singular_energy| < exclusion are skipped
  /// (principal-value style); negative singular_energy disables this.
  double singular_energy = -1.0;
  double exclusion = 0.0;
};

/// Average of clock(E) over the packet's momentum density |phi(k)|^2, or over
/// |T(k) phi(k)|^2 for transmitted weighting. Weights are normalized.
PacketAverage packet_average(const std::function<double(double)>& clock, const TunnelPacket& packet, Weighting w,
                             const Barrier& b, const Units& units = {}, const PacketAverageOptions& opt = {});

/// One row of a scan: simulation statistics and comparison clocks.
struct ScanRow {
  double value = 0.0;  // the scanned parameter
  TunnelStats stats;
  double phase_plane = 0.0;
  double phase_packet = 0.0;
  double semiclassical_packet = 0.0;
  double larmor_plane = 0.0;
  double larmor_packet = 0.0;
};

/// Clocks for the traversal interval [x1, x2] of `setup`. Non-finite values
/// mark clocks that are undefined at this point.
ScanRow comparison_clocks(const TunnelSetup& setup, const Units& units = {});

enum class ScanParameter { Width, Height };

/// d2 follows the barrier: x2 = d + offset (offset 5 Angstrom by default).
/// Point i uses master seed split_seed(master_seed, i). `outcomes`, when
/// given, receives the per-trajectory outcomes of every point.
std::vector<ScanRow> run_scan(TunnelSetup base, ScanParameter what, const std::vector<double>& values, int n,
                              std::uint64_t master_seed, int workers = 1, double d2_offset = 5.0,
                              const Units& units = {},
                              std::vector<std::vector<TunnelOutcome>>* outcomes = nullptr);

/// Mean transmitted time of a width scan: strictly increasing, each step
/// larger than the combined standard error sqrt(se_i^2 + se_{i+1}^2), and a
/// least-squares line with r^2 >= min_r2.
struct WidthTrendCheck {
  bool increasing = false;
  double min_step_sigma = 0.0;  // smallest step in units of its standard error
  double r_squared = 0.0;
  bool pass = false;
};
WidthTrendCheck check_width_trend(const std::vector<ScanRow>& rows, double min_r2 = 0.9);

/// Height scan: argmax of the mean transmitted time inside [lo, hi], and the
/// last point below the first by more than their combined standard error.
struct HeightPeakCheck {
  double argmax = 0.0;
  double drop_sigma = 0.0;  // (tau_first - tau_last) / combined se
  bool peak_in_window = false;
  bool last_below_first = false;
  bool pass = false;
};
HeightPeakCheck check_height_peak(const std::vector<ScanRow>& rows, double lo = 4.0, double hi = 6.0);

}  // namespace eeqt
