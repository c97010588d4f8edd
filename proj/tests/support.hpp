#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "mireg/mireg.hpp"

namespace mireg::testing {

inline Volume random_volume(const GridSpec& g, Rng& rng, double lo = 0.0, double hi = 255.0) {
  Volume v(g);
  for (auto& x : v.data) x = rng.uniform(lo, hi);
  return v;
}

template <class Tag>
VectorField<Tag> random_field(const GridSpec& g, Rng& rng, double max_voxels) {
  VectorField<Tag> f(g);
  for (int a = 0; a < 3; ++a)
    for (auto& x : f.comp[a]) x = rng.uniform(-max_voxels, max_voxels) * g.spacing[a];
  return f;
}

/// Velocity whose entries stay 0.35..0.65 voxel away from zero in every
/// component, so small perturbations never push a sample position across a
/// cell face (where trilinear interpolation has a kink).
inline VelocityField kink_free_velocity(const GridSpec& g, Rng& rng) {
  VelocityField v(g);
  for (int a = 0; a < 3; ++a) {
    const double base = rng.uniform(0.45, 0.55) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    for (auto& x : v.comp[a]) x = (base + rng.uniform(-0.1, 0.1)) * g.spacing[a];
  }
  return v;
}

/// Largest per-voxel vector length of `d`, in voxels.
inline double max_residual(const DisplacementField& d) { return max_voxel_norm(d); }

/// Central difference of `f` along entry (axis, idx) of field `x`.
template <class Tag>
double central_difference(VectorField<Tag> x, int axis, std::size_t idx, double h,
                          const std::function<double(const VectorField<Tag>&)>& f) {
  const double x0 = x.comp[axis][idx];
  x.comp[axis][idx] = x0 + h;
  const double fp = f(x);
  x.comp[axis][idx] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

inline double rel_error(double a, double n, double floor = 1e-12) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mireg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace mireg::testing
