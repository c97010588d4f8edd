#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/resample.hpp"
#include "mireg/rng.hpp"

namespace mireg::synthetic {

/// Random Gaussian blobs of both signs, evaluated analytically so a warped
/// copy can be rendered without resampling.
class BlobPattern {
 public:
  /// Blob widths scale with the smallest grid dimension relative to 32.
  BlobPattern(const GridSpec& g, Rng& rng, int n_blobs = 60, double sigma_lo = 1.5, double sigma_hi = 3.5) {
    const double scale = static_cast<double>(std::min({g.dims[0], g.dims[1], g.dims[2]})) / 32.0;
    for (int b = 0; b < n_blobs; ++b) {
      Blob bl;
      for (int a = 0; a < 3; ++a) bl.c[a] = rng.uniform(0.0, static_cast<double>(g.dims[a] - 1));
      const double s = rng.uniform(sigma_lo, sigma_hi) * std::max(scale, 0.25);
      bl.inv2s2 = 1.0 / (2.0 * s * s);
      bl.amp = rng.uniform(0.3, 1.0) * (rng.uniform() < 0.3 ? -1.0 : 1.0);
      blobs_.push_back(bl);
    }
  }

  /// Value at a point given in voxel coordinates.
  double operator()(const Vec3& p) const {
    double s = 0.0;
    for (const auto& bl : blobs_) {
      const double dx = p[0] - bl.c[0], dy = p[1] - bl.c[1], dz = p[2] - bl.c[2];
      s += bl.amp * std::exp(-(dx * dx + dy * dy + dz * dz) * bl.inv2s2);
    }
    return s;
  }

  /// Renders the pattern rescaled to [0, 255].
  Volume render(const GridSpec& g) const {
    Volume v(g);
    for (std::size_t i = 0; i < g.size(); ++i) v.data[i] = (*this)(g.coords_f(i));
    return normalize_intensity(v);
  }

  /// Renders x -> pattern(x + d(x)) rescaled to [0, 255]; an
  /// interpolation-free counterpart of warp_volume(render(g), d).
  Volume render_warped(const DisplacementField& d) const {
    const GridSpec& g = d.grid;
    Volume v(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      Vec3 p = g.coords_f(i);
      for (int a = 0; a < 3; ++a) p[a] += d.comp[a][i] / g.spacing[a];
      v.data[i] = (*this)(p);
    }
    return normalize_intensity(v);
  }

 private:
  struct Blob {
    Vec3 c;
    double inv2s2, amp;
  };
  std::vector<Blob> blobs_;
};

/// Sum of random Gaussian blobs of both signs, rescaled to [0, 255].
inline Volume blob_image(const GridSpec& g, Rng& rng, int n_blobs = 60, double sigma_lo = 1.5,
                         double sigma_hi = 3.5) {
  return BlobPattern(g, rng, n_blobs, sigma_lo, sigma_hi).render(g);
}

/// Smooth random velocity: a few Gaussian bumps with random vector weights,
/// tapered to zero towards the border and scaled so that the largest vector
/// is `max_voxels` long in voxel units.
inline VelocityField smooth_velocity(const GridSpec& g, Rng& rng, double max_voxels, int n_bumps = 8,
                                     bool taper = true, double width_lo = 0.15, double width_hi = 0.3) {
  struct Bump {
    Vec3 c, w;
    double inv2s2;
  };
  std::vector<Bump> bumps;
  const double extent = static_cast<double>(std::min({g.dims[0], g.dims[1], g.dims[2]}));
  for (int b = 0; b < n_bumps; ++b) {
    Bump bp;
    for (int a = 0; a < 3; ++a) {
      bp.c[a] = rng.uniform(0.2, 0.8) * static_cast<double>(g.dims[a] - 1);
      bp.w[a] = rng.uniform(-1.0, 1.0);
    }
    const double s = rng.uniform(width_lo, width_hi) * extent;
    bp.inv2s2 = 1.0 / (2.0 * s * s);
    bumps.push_back(bp);
  }
  VelocityField v(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 c = g.coords_f(i);
    double win = 1.0;
    if (taper)
      for (int a = 0; a < 3; ++a)
        win *= std::sin(std::numbers::pi * (c[a] + 0.5) / static_cast<double>(g.dims[a]));
    Vec3 acc{0, 0, 0};
    for (const auto& bp : bumps) {
      const double dx = c[0] - bp.c[0], dy = c[1] - bp.c[1], dz = c[2] - bp.c[2];
      const double e = std::exp(-(dx * dx + dy * dy + dz * dz) * bp.inv2s2);
      for (int a = 0; a < 3; ++a) acc[a] += bp.w[a] * e;
    }
    for (int a = 0; a < 3; ++a) v.comp[a][i] = win * acc[a] * g.spacing[a];
  }
  const double mx = max_voxel_norm(v);
  if (mx > 0.0) v *= max_voxels / mx;
  return v;
}

}  // namespace mireg::synthetic
