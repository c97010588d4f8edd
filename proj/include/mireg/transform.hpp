#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/sampling.hpp"

namespace mireg {

/// phi_out = phi1 o phi2, i.e. out(x) = d2(x) + d1(x + d2(x)).
inline DisplacementField compose(const DisplacementField& d1, const DisplacementField& d2) {
  require_same_grid(d1.grid, d2.grid, "compose");
  const auto& g = d1.grid;
  DisplacementField out(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 b = d2.at(i);
    const TrilinearStencil st(g, displaced_position(g, i, b));
    for (int a = 0; a < 3; ++a) out.comp[a][i] = b[a] + st.value(d1.comp[a]);
  }
  return out;
}

/// Approximate inverse of a displacement by fixed-point iteration
/// u <- -d(x + u(x)). Converges when |grad d| < 1; prefer exp(-v) when the
/// velocity is known.
inline DisplacementField invert_displacement(const DisplacementField& d, int iterations = 50) {
  if (iterations < 1) throw Error(Errc::InvalidArgument, "invert_displacement: iterations must be >= 1");
  const auto& g = d.grid;
  DisplacementField u = d * -1.0;
  DisplacementField next(g);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const TrilinearStencil st(g, displaced_position(g, i, u.at(i)));
      for (int a = 0; a < 3; ++a) next.comp[a][i] = -st.value(d.comp[a]);
    }
    std::swap(u, next);
  }
  return u;
}

/// Adjoint of compose. Given dL/d(out), accumulates into dL/d(d1) and
/// dL/d(d2). Either target may alias the other (self-composition). The
/// scatter into d1 runs in voxel order, so sums are reproducible.
inline void compose_backward(const DisplacementField& d1, const DisplacementField& d2,
                             const DisplacementField& g_out, DisplacementField* g_d1, DisplacementField* g_d2) {
  const auto& g = d1.grid;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const TrilinearStencil st(g, displaced_position(g, i, d2.at(i)));
    const Vec3 go = g_out.at(i);
    if (g_d2 != nullptr) {
      Vec3 acc = go;
      for (int b = 0; b < 3; ++b) {
        if (go[b] == 0.0) continue;
        const Vec3 sg = st.gradient(d1.comp[b]);
        for (int a = 0; a < 3; ++a) acc[a] += go[b] * sg[a] / g.spacing[a];
      }
      for (int a = 0; a < 3; ++a) g_d2->comp[a][i] += acc[a];
    }
    if (g_d1 != nullptr)
      for (int b = 0; b < 3; ++b) st.scatter(g_d1->comp[b], go[b]);
  }
}

/// Intermediate fields of one scaling-and-squaring run; stages[0] = v/2^K and
/// stages[K] is the exponential.
struct ExpTape {
  std::vector<DisplacementField> stages;
  const DisplacementField& result() const { return stages.back(); }
};

inline ExpTape exp_velocity_taped(const VelocityField& v, int steps) {
  if (steps < 0) throw Error(Errc::InvalidArgument, "exp_velocity: negative step count");
  ExpTape tape;
  tape.stages.reserve(static_cast<std::size_t>(steps) + 1);
  tape.stages.push_back(retag<DisplacementTag>(v * std::ldexp(1.0, -steps)));
  for (int s = 0; s < steps; ++s) tape.stages.push_back(compose(tape.stages.back(), tape.stages.back()));
  return tape;
}

/// Stationary velocity exponential by scaling and squaring. exp(-v) is the
/// inverse of exp(v) up to discretisation error.
inline DisplacementField exp_velocity(const VelocityField& v, int steps) {
  if (steps < 0) throw Error(Errc::InvalidArgument, "exp_velocity: negative step count");
  DisplacementField d = retag<DisplacementTag>(v * std::ldexp(1.0, -steps));
  for (int s = 0; s < steps; ++s) d = compose(d, d);
  return d;
}

/// Back-propagates dL/d(exp) through every squaring to dL/dv.
inline VelocityField exp_velocity_backward(const ExpTape& tape, DisplacementField grad) {
  const int steps = static_cast<int>(tape.stages.size()) - 1;
  for (int s = steps - 1; s >= 0; --s) {
    DisplacementField prev(grad.grid);
    compose_backward(tape.stages[s], tape.stages[s], grad, &prev, &prev);
    grad = std::move(prev);
  }
  return retag<VelocityTag>(grad * std::ldexp(1.0, -steps));
}

namespace detail {

/// Difference stencil along one axis in index units: coef * (f[hi] - f[lo]).
/// Central inside, one-sided at the two ends.
struct AxisDiff {
  std::int64_t lo, hi;
  double coef;
};

inline AxisDiff axis_diff(std::int64_t i, std::int64_t n) noexcept {
  if (i == 0) return {0, 1, 1.0};
  if (i == n - 1) return {n - 2, n - 1, 1.0};
  return {i - 1, i + 1, 0.5};
}

inline void require_jacobian_dims(const GridSpec& g) {
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] < 3) throw Error(Errc::TooSmall, "jacobian needs every dim >= 3");
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline double det3(const Mat3& m) noexcept {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline Mat3 cofactor3(const Mat3& m) noexcept {
  Mat3 c{};
  c[0][0] = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  c[0][1] = -(m[1][0] * m[2][2] - m[1][2] * m[2][0]);
  c[0][2] = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  c[1][0] = -(m[0][1] * m[2][2] - m[0][2] * m[2][1]);
  c[1][1] = m[0][0] * m[2][2] - m[0][2] * m[2][0];
  c[1][2] = -(m[0][0] * m[2][1] - m[0][1] * m[2][0]);
  c[2][0] = m[0][1] * m[1][2] - m[0][2] * m[1][1];
  c[2][1] = -(m[0][0] * m[1][2] - m[0][2] * m[1][0]);
  c[2][2] = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  return c;
}

struct JacobianStencil {
  std::array<AxisDiff, 3> diff;
  std::array<std::size_t, 3> lo, hi;
};

inline JacobianStencil jacobian_stencil(const GridSpec& g, std::int64_t i, std::int64_t j, std::int64_t k) {
  JacobianStencil s;
  const Index3 c{i, j, k};
  for (int b = 0; b < 3; ++b) {
    s.diff[b] = axis_diff(c[b], g.dims[b]);
    Index3 lo = c, hi = c;
    lo[b] = s.diff[b].lo;
    hi[b] = s.diff[b].hi;
    s.lo[b] = g.index(lo[0], lo[1], lo[2]);
    s.hi[b] = g.index(hi[0], hi[1], hi[2]);
  }
  return s;
}

/// d(phi_a)/d(x_b) in voxel units.
inline Mat3 jacobian_matrix(const DisplacementField& d, const JacobianStencil& s) noexcept {
  Mat3 m{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      m[a][b] = (a == b ? 1.0 : 0.0) +
                s.diff[b].coef * (d.comp[a][s.hi[b]] - d.comp[a][s.lo[b]]) / d.grid.spacing[a];
  return m;
}

}  // namespace detail

/// Determinant of the voxel-unit Jacobian of phi(x) = x + d(x).
inline Volume jacobian_det(const DisplacementField& d) {
  const auto& g = d.grid;
  detail::require_jacobian_dims(g);
  Volume out(g);
  for (std::int64_t k = 0; k < g.dims[2]; ++k)
    for (std::int64_t j = 0; j < g.dims[1]; ++j)
      for (std::int64_t i = 0; i < g.dims[0]; ++i)
        out.at(i, j, k) = detail::det3(detail::jacobian_matrix(d, detail::jacobian_stencil(g, i, j, k)));
  return out;
}

/// Non-diffeomorphic volume: mean over voxels of max(0, -det J), as a fraction.
inline double ndv_metric(const DisplacementField& d) {
  const Volume jac = jacobian_det(d);
  double s = 0.0;
  for (double j : jac.data) s += std::max(0.0, -j);
  return s / static_cast<double>(jac.data.size());
}

struct FieldLoss {
  double value = 0.0;
  DisplacementField grad;
};

/// Squared-hinge folding penalty mean(max(0, -det J)^2) and its gradient.
inline FieldLoss ndv_loss(const DisplacementField& d) {
  const auto& g = d.grid;
  detail::require_jacobian_dims(g);
  FieldLoss out{0.0, DisplacementField(g)};
  const double inv_n = 1.0 / static_cast<double>(g.size());
  for (std::int64_t k = 0; k < g.dims[2]; ++k)
    for (std::int64_t j = 0; j < g.dims[1]; ++j)
      for (std::int64_t i = 0; i < g.dims[0]; ++i) {
        const auto st = detail::jacobian_stencil(g, i, j, k);
        const auto m = detail::jacobian_matrix(d, st);
        const double jd = detail::det3(m);
        if (jd >= 0.0) continue;
        out.value += jd * jd * inv_n;
        const double dl_dj = 2.0 * jd * inv_n;
        const auto cof = detail::cofactor3(m);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            const double gab = dl_dj * cof[a][b] * st.diff[b].coef / g.spacing[a];
            out.grad.comp[a][st.hi[b]] += gab;
            out.grad.comp[a][st.lo[b]] -= gab;
          }
      }
  return out;
}

}  // namespace mireg
