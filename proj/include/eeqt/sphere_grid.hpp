#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace eeqt {

using Vec3 = Eigen::Vector3d;

/// Equal-area pixelization of the unit sphere in the HEALPix ring scheme:
/// 12 * nside^2 cells of identical area, numbered ring by ring from the north
/// pole. Refining nside by a factor 2^m splits every cell into 4^m cells.
class SphereGrid {
 public:
  explicit SphereGrid(int nside);

  int nside() const { return nside_; }
  std::int64_t size() const { return npix_; }
  double cell_area() const;
  /// Angular size sqrt(cell area) of one cell.
  double resolution() const;

  std::int64_t pixel(double z, double phi) const;
  std::int64_t pixel(const Vec3& r) const;
  /// Center of a cell as (z = cos theta, phi).
  std::pair<double, double> center_zphi(std::int64_t pix) const;
  Vec3 center(std::int64_t pix) const;

 private:
  int nside_;
  std::int64_t npix_;
  std::int64_t ncap_;
};

}  // namespace eeqt
