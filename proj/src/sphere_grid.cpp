#include "eeqt/sphere_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace eeqt {

namespace {

std::int64_t isqrt(std::int64_t v) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v) + 0.5));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

std::int64_t imod(std::int64_t a, std::int64_t m) {
  const auto r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

SphereGrid::SphereGrid(int nside) : nside_(nside) {
  if (nside < 1 || nside > (1 << 20)) throw std::invalid_argument("sphere grid resolution out of range");
  const std::int64_t n = nside;
  npix_ = 12 * n * n;
  ncap_ = 2 * n * (n - 1);
}

double SphereGrid::cell_area() const { return 4.0 * std::numbers::pi / static_cast<double>(npix_); }

double SphereGrid::resolution() const { return std::sqrt(cell_area()); }

std::int64_t SphereGrid::pixel(double z, double phi) const {
  constexpr double kHalfPi = std::numbers::pi / 2;
  const std::int64_t n = nside_;
  const double za = std::abs(z);
  double tt = std::fmod(phi, 2 * std::numbers::pi);
  if (tt < 0) tt += 2 * std::numbers::pi;
  tt /= kHalfPi;  // in [0, 4)
  if (za <= 2.0 / 3.0) {
    const double t1 = n * (0.5 + tt);
    const double t2 = n * z * 0.75;
    const auto jp = static_cast<std::int64_t>(t1 - t2);
    const auto jm = static_cast<std::int64_t>(t1 + t2);
    const std::int64_t ir = n + 1 + jp - jm;
    const std::int64_t kshift = 1 - (ir & 1);
    const std::int64_t ip = imod((jp + jm - n + kshift + 1) / 2, 4 * n);
    return ncap_ + (ir - 1) * 4 * n + ip;
  }
  const double tp = tt - std::floor(tt);
  const double tmp = n * std::sqrt(3.0 * (1.0 - za));
  const auto jp = static_cast<std::int64_t>(tp * tmp);
  const auto jm = static_cast<std::int64_t>((1.0 - tp) * tmp);
  const std::int64_t ir = jp + jm + 1;
  const std::int64_t ip = imod(static_cast<std::int64_t>(tt * ir), 4 * ir);
  return z > 0 ? 2 * ir * (ir - 1) + ip : npix_ - 2 * ir * (ir + 1) + ip;
}

std::int64_t SphereGrid::pixel(const Vec3& r) const {
  const double norm = r.norm();
  return pixel(std::clamp(r.z() / norm, -1.0, 1.0), std::atan2(r.y(), r.x()));
}

std::pair<double, double> SphereGrid::center_zphi(std::int64_t pix) const {
  if (pix < 0 || pix >= npix_) throw std::out_of_range("pixel index out of range");
  constexpr double kHalfPi = std::numbers::pi / 2;
  const std::int64_t n = nside_;
  const double fact = 3.0 * static_cast<double>(n) * static_cast<double>(n);
  if (pix < ncap_) {
    const std::int64_t iring = (1 + isqrt(1 + 2 * pix)) >> 1;
    const std::int64_t iphi = pix + 1 - 2 * iring * (iring - 1);
    return {1.0 - static_cast<double>(iring * iring) / fact, (static_cast<double>(iphi) - 0.5) * kHalfPi / iring};
  }
  if (pix < npix_ - ncap_) {
    const std::int64_t ip = pix - ncap_;
    const std::int64_t iring = ip / (4 * n) + n;
    const std::int64_t iphi = ip % (4 * n) + 1;
    const double fodd = ((iring + n) & 1) ? 1.0 : 0.5;
    return {static_cast<double>(2 * n - iring) * 2.0 / (3.0 * n), (static_cast<double>(iphi) - fodd) * kHalfPi / n};
  }
  const std::int64_t ip = npix_ - pix;
  const std::int64_t iring = (1 + isqrt(2 * ip - 1)) >> 1;
  const std::int64_t iphi = 4 * iring + 1 - (ip - 2 * iring * (iring - 1));
  return {-1.0 + static_cast<double>(iring * iring) / fact, (static_cast<double>(iphi) - 0.5) * kHalfPi / iring};
}

Vec3 SphereGrid::center(std::int64_t pix) const {
  const auto [z, phi] = center_zphi(pix);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

}  // namespace eeqt
