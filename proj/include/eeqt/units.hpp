#pragma once

namespace eeqt {

/// Physical constants in the working unit system: energies in eV, lengths in
/// Angstrom, times in femtoseconds.
struct Units {
  double hbar = 0.6582119;         // eV fs
  double hbar2_over_2m = 3.80998;  // eV A^2, electron mass
};

inline constexpr Units kElectronUnits{};

}  // namespace eeqt
