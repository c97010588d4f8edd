#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>

#include "mireg/error.hpp"

namespace mireg {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::int64_t, 3>;

/// Axis-aligned voxel grid. Voxel (i,j,k) sits at origin + (i,j,k) * spacing
/// in world millimetres; x is the fastest-varying axis in memory.
struct GridSpec {
  Index3 dims{2, 2, 2};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }

  std::size_t index(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
    return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
  }

  Index3 coords(std::size_t idx) const noexcept {
    const auto n = static_cast<std::int64_t>(idx);
    return {n % dims[0], (n / dims[0]) % dims[1], n / (dims[0] * dims[1])};
  }

  Vec3 coords_f(std::size_t idx) const noexcept {
    const Index3 c = coords(idx);
    return {static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])};
  }

  Vec3 world(const Vec3& voxel) const noexcept {
    return {origin[0] + voxel[0] * spacing[0], origin[1] + voxel[1] * spacing[1],
            origin[2] + voxel[2] * spacing[2]};
  }

  Vec3 voxel(const Vec3& world_mm) const noexcept {
    return {(world_mm[0] - origin[0]) / spacing[0], (world_mm[1] - origin[1]) / spacing[1],
            (world_mm[2] - origin[2]) / spacing[2]};
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 2) throw Error(Errc::TooSmall, "grid dims must all be >= 2");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw Error(Errc::InvalidArgument, "grid spacing must be positive");
      if (!std::isfinite(origin[a])) throw Error(Errc::InvalidArgument, "grid origin not finite");
    }
  }

  std::string describe() const {
    std::ostringstream os;
    os << dims[0] << "x" << dims[1] << "x" << dims[2] << " @ (" << spacing[0] << "," << spacing[1]
       << "," << spacing[2] << ")mm";
    return os.str();
  }
};

inline GridSpec make_grid(std::int64_t nx, std::int64_t ny, std::int64_t nz, Vec3 spacing = {1, 1, 1},
                          Vec3 origin = {0, 0, 0}) {
  GridSpec g{{nx, ny, nz}, spacing, origin};
  g.validate();
  return g;
}

/// Grids match when dims agree exactly and spacing/origin agree to float
/// precision (headers round-trip through 32-bit floats).
inline bool same_grid(const GridSpec& a, const GridSpec& b) noexcept {
  if (a.dims != b.dims) return false;
  for (int i = 0; i < 3; ++i) {
    const double ts = 1e-6 * std::max(std::abs(a.spacing[i]), std::abs(b.spacing[i]));
    if (std::abs(a.spacing[i] - b.spacing[i]) > ts) return false;
    const double to = 1e-6 * std::max({1.0, std::abs(a.origin[i]), std::abs(b.origin[i])});
    if (std::abs(a.origin[i] - b.origin[i]) > to) return false;
  }
  return true;
}

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!same_grid(a, b))
    throw Error(Errc::GridMismatch, std::string(what) + ": " + a.describe() + " vs " + b.describe());
}

}  // namespace mireg
