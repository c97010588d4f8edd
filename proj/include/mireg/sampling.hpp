#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include "mireg/grid.hpp"
#include "mireg/image.hpp"

namespace mireg {

/// Trilinear interpolation weights for one continuous voxel position, with
/// clamp-to-edge borders. The same stencil serves values, spatial
/// derivatives (for warp adjoints) and scatter (for the adjoint w.r.t. the
/// sampled image).
///
/// Positions are clamped to [0, n-1] per axis; the derivative along a clamped
/// axis is zero. Inside the domain the derivative is the slope of the linear
/// piece; at exact integer coordinates the left cell is used.
class TrilinearStencil {
 public:
  TrilinearStencil(const GridSpec& g, const Vec3& p) noexcept {
    std::array<std::int64_t, 3> i0{};
    std::array<double, 3> t{};
    std::array<double, 3> slope{};
    for (int a = 0; a < 3; ++a) {
      const std::int64_t n = g.dims[a];
      const double q = p[a];
      if (q <= 0.0) {
        i0[a] = 0;
        t[a] = 0.0;
        slope[a] = q < 0.0 ? 0.0 : 1.0;
      } else if (q >= static_cast<double>(n - 1)) {
        i0[a] = n - 2;
        t[a] = 1.0;
        slope[a] = q > static_cast<double>(n - 1) ? 0.0 : 1.0;
      } else {
        i0[a] = static_cast<std::int64_t>(std::ceil(q)) - 1;
        t[a] = q - static_cast<double>(i0[a]);
        slope[a] = 1.0;
      }
    }
    const std::size_t base = g.index(i0[0], i0[1], i0[2]);
    const std::size_t sx = 1, sy = static_cast<std::size_t>(g.dims[0]),
                      sz = static_cast<std::size_t>(g.dims[0] * g.dims[1]);
    for (int c = 0; c < 8; ++c) {
      const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
      idx_[c] = base + bx * sx + by * sy + bz * sz;
      const double wx = bx ? t[0] : 1.0 - t[0];
      const double wy = by ? t[1] : 1.0 - t[1];
      const double wz = bz ? t[2] : 1.0 - t[2];
      w_[c] = wx * wy * wz;
      dw_[0][c] = (bx ? slope[0] : -slope[0]) * wy * wz;
      dw_[1][c] = wx * (by ? slope[1] : -slope[1]) * wz;
      dw_[2][c] = wx * wy * (bz ? slope[2] : -slope[2]);
    }
  }

  double value(std::span<const double> f) const noexcept {
    double s = 0.0;
    for (int c = 0; c < 8; ++c) s += w_[c] * f[idx_[c]];
    return s;
  }

  /// Derivative of the interpolated value w.r.t. the voxel-unit position.
  Vec3 gradient(std::span<const double> f) const noexcept {
    Vec3 gr{0.0, 0.0, 0.0};
    for (int c = 0; c < 8; ++c) {
      const double v = f[idx_[c]];
      gr[0] += dw_[0][c] * v;
      gr[1] += dw_[1][c] * v;
      gr[2] += dw_[2][c] * v;
    }
    return gr;
  }

  /// Adjoint of value(): accumulates g * weight into each corner.
  void scatter(std::span<double> f, double g) const noexcept {
    for (int c = 0; c < 8; ++c) f[idx_[c]] += g * w_[c];
  }

 private:
  std::array<std::size_t, 8> idx_{};
  std::array<double, 8> w_{};
  std::array<std::array<double, 8>, 3> dw_{};
};

/// Trilinear interpolation at a continuous voxel coordinate (clamped borders).
inline double trilinear_sample(const Volume& vol, const Vec3& p) {
  return TrilinearStencil(vol.grid, p).value(vol.data);
}

/// Continuous voxel position reached from voxel `idx` by displacement `d_mm`.
inline Vec3 displaced_position(const GridSpec& g, std::size_t idx, const Vec3& d_mm) noexcept {
  const auto c = g.coords(idx);
  return {static_cast<double>(c[0]) + d_mm[0] / g.spacing[0],
          static_cast<double>(c[1]) + d_mm[1] / g.spacing[1],
          static_cast<double>(c[2]) + d_mm[2] / g.spacing[2]};
}

}  // namespace mireg
