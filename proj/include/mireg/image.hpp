#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mireg/grid.hpp"

namespace mireg {

/// Scalar image on a grid.
struct Volume {
  GridSpec grid;
  std::vector<double> data;

  Volume() = default;
  explicit Volume(const GridSpec& g, double fill = 0.0) : grid(g), data(g.size(), fill) { g.validate(); }
  Volume(const GridSpec& g, std::vector<double> values) : grid(g), data(std::move(values)) {
    g.validate();
    if (data.size() != g.size()) throw Error(Errc::InvalidArgument, "volume data length != product of dims");
    for (double v : data)
      if (!std::isfinite(v)) throw Error(Errc::NonFinite, "volume contains non-finite values");
  }

  double& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data[grid.index(i, j, k)]; }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const { return data[grid.index(i, j, k)]; }
};

/// Integer labels; 0 is background.
struct LabelMap {
  GridSpec grid;
  std::vector<std::int32_t> data;

  LabelMap() = default;
  explicit LabelMap(const GridSpec& g) : grid(g), data(g.size(), 0) { g.validate(); }
  LabelMap(const GridSpec& g, std::vector<std::int32_t> values) : grid(g), data(std::move(values)) {
    g.validate();
    if (data.size() != g.size()) throw Error(Errc::InvalidArgument, "label data length != product of dims");
    for (auto v : data)
      if (v < 0) throw Error(Errc::InvalidArgument, "labels must be non-negative");
  }
};

/// World-space points in mm.
struct LandmarkSet {
  std::vector<Vec3> points;
};

struct VelocityTag {};
struct DisplacementTag {};

/// Three-component vector field, components stored in world millimetres.
/// The tag separates velocities (transform parameters) from displacements
/// (phi(x) = x + d(x)) at the type level.
template <class Tag>
struct VectorField {
  GridSpec grid;
  std::array<std::vector<double>, 3> comp;

  VectorField() = default;
  explicit VectorField(const GridSpec& g) : grid(g) {
    g.validate();
    for (auto& c : comp) c.assign(g.size(), 0.0);
  }

  std::size_t size() const noexcept { return grid.size(); }

  Vec3 at(std::size_t idx) const noexcept { return {comp[0][idx], comp[1][idx], comp[2][idx]}; }
  void set(std::size_t idx, const Vec3& v) noexcept {
    comp[0][idx] = v[0];
    comp[1][idx] = v[1];
    comp[2][idx] = v[2];
  }

  VectorField& operator+=(const VectorField& o) {
    for (int a = 0; a < 3; ++a)
      for (std::size_t i = 0; i < comp[a].size(); ++i) comp[a][i] += o.comp[a][i];
    return *this;
  }

  VectorField& operator*=(double s) {
    for (auto& c : comp)
      for (auto& x : c) x *= s;
    return *this;
  }

  bool all_finite() const noexcept {
    for (const auto& c : comp)
      for (double x : c)
        if (!std::isfinite(x)) return false;
    return true;
  }
};

using VelocityField = VectorField<VelocityTag>;
using DisplacementField = VectorField<DisplacementTag>;

template <class Tag>
VectorField<Tag> operator*(VectorField<Tag> f, double s) {
  f *= s;
  return f;
}

template <class Tag>
VectorField<Tag> operator+(VectorField<Tag> a, const VectorField<Tag>& b) {
  a += b;
  return a;
}

/// Reinterpret a field's payload under another tag (e.g. a velocity used as
/// an initial small displacement).
template <class To, class From>
VectorField<To> retag(VectorField<From> f) {
  VectorField<To> out;
  out.grid = f.grid;
  out.comp = std::move(f.comp);
  return out;
}

/// Euclidean norm of a field vector measured in voxel units of its grid.
inline double voxel_norm(const GridSpec& g, const Vec3& mm) noexcept {
  const double x = mm[0] / g.spacing[0], y = mm[1] / g.spacing[1], z = mm[2] / g.spacing[2];
  return std::sqrt(x * x + y * y + z * z);
}

template <class Tag>
double mean_voxel_norm(const VectorField<Tag>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += voxel_norm(f.grid, f.at(i));
  return s / static_cast<double>(f.size());
}

template <class Tag>
double max_voxel_norm(const VectorField<Tag>& f) {
  double m = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) m = std::max(m, voxel_norm(f.grid, f.at(i)));
  return m;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace mireg
