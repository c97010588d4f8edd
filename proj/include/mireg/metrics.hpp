#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/sampling.hpp"

namespace mireg {

struct DiceResult {
  std::map<std::int32_t, double> per_label;
  /// Unweighted mean over labels present in either map; empty when neither
  /// map has any foreground.
  std::optional<double> mean;
};

inline DiceResult dice(const LabelMap& a, const LabelMap& b) {
  require_same_grid(a.grid, b.grid, "dice");
  std::map<std::int32_t, std::array<std::int64_t, 3>> counts;  // |A|, |B|, |A n B|
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const auto la = a.data[i], lb = b.data[i];
    if (la != 0) ++counts[la][0];
    if (lb != 0) ++counts[lb][1];
    if (la != 0 && la == lb) ++counts[la][2];
  }
  DiceResult r;
  double s = 0.0;
  for (const auto& [label, c] : counts) {
    const double d = 2.0 * static_cast<double>(c[2]) / static_cast<double>(c[0] + c[1]);
    r.per_label[label] = d;
    s += d;
  }
  if (!counts.empty()) r.mean = s / static_cast<double>(counts.size());
  return r;
}

/// Voxels of `label` with at least one 6-neighbour outside the label; the
/// image border counts as outside.
inline std::vector<std::size_t> label_surface(const LabelMap& m, std::int32_t label) {
  const auto& g = m.grid;
  std::vector<std::size_t> out;
  for (std::int64_t k = 0; k < g.dims[2]; ++k)
    for (std::int64_t j = 0; j < g.dims[1]; ++j)
      for (std::int64_t i = 0; i < g.dims[0]; ++i) {
        const std::size_t idx = g.index(i, j, k);
        if (m.data[idx] != label) continue;
        const Index3 c{i, j, k};
        bool surface = false;
        for (int a = 0; a < 3 && !surface; ++a)
          for (int s : {-1, 1}) {
            Index3 n = c;
            n[a] += s;
            if (n[a] < 0 || n[a] >= g.dims[a] || m.data[g.index(n[0], n[1], n[2])] != label) {
              surface = true;
              break;
            }
          }
        if (surface) out.push_back(idx);
      }
  return out;
}

namespace detail {

/// One pass of the Felzenszwalb-Huttenlocher lower-envelope transform:
/// out[q] = min_p (w (q - p)^2 + f[p]); +inf entries are not sites.
inline void edt_1d(std::vector<double>& f, double w, std::vector<double>& out, std::vector<std::int64_t>& v,
                   std::vector<double>& z) {
  const auto n = static_cast<std::int64_t>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::int64_t k = -1;
  auto intersect = [&](std::int64_t q, std::int64_t p) {
    return ((f[q] + w * double(q) * double(q)) - (f[p] + w * double(p) * double(p))) / (2.0 * w * double(q - p));
  };
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), inf);
    return;
  }
  k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[k + 1] < double(q)) ++k;
    const double d = double(q - v[k]);
    out[q] = w * d * d + f[v[k]];
  }
}

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// site, with anisotropic spacing.
inline std::vector<double> squared_distance_transform(const GridSpec& g, const std::vector<std::size_t>& sites) {
  std::vector<double> dist(g.size(), std::numeric_limits<double>::infinity());
  for (auto s : sites) dist[s] = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t n = g.dims[axis];
    const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1]);
    const double w = g.spacing[axis] * g.spacing[axis];
    std::vector<double> f(n), out(n), z(n + 1);
    std::vector<std::int64_t> v(n);
    const auto lines = static_cast<std::int64_t>(g.size()) / n;
    for (std::int64_t l = 0; l < lines; ++l) {
      std::int64_t start;
      if (axis == 0)
        start = l * n;
      else if (axis == 1)
        start = (l % g.dims[0]) + (l / g.dims[0]) * g.dims[0] * g.dims[1];
      else
        start = l;
      for (std::int64_t t = 0; t < n; ++t) f[t] = dist[start + t * stride];
      edt_1d(f, w, out, v, z);
      for (std::int64_t t = 0; t < n; ++t) dist[start + t * stride] = out[t];
    }
  }
  return dist;
}

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

}  // namespace detail

/// 95th-percentile symmetric surface distance in mm.
inline double hd95(const LabelMap& a, const LabelMap& b, std::int32_t label) {
  require_same_grid(a.grid, b.grid, "hd95");
  const auto sa = label_surface(a, label), sb = label_surface(b, label);
  if (sa.empty() || sb.empty()) throw Error(Errc::EmptyLabel, "hd95: label " + std::to_string(label) + " missing");
  const auto da = detail::squared_distance_transform(a.grid, sa);
  const auto db = detail::squared_distance_transform(b.grid, sb);
  std::vector<double> ab, ba;
  ab.reserve(sa.size());
  ba.reserve(sb.size());
  for (auto p : sa) ab.push_back(std::sqrt(db[p]));
  for (auto p : sb) ba.push_back(std::sqrt(da[p]));
  return std::max(detail::percentile(std::move(ab), 0.95), detail::percentile(std::move(ba), 0.95));
}

struct TreResult {
  std::optional<double> mean;  ///< empty for empty landmark lists (not applicable)
  std::vector<double> per_landmark;
};

/// Target registration error: |x_f + d(x_f) - x_m| per landmark pair, with d
/// sampled trilinearly at the fixed landmark.
inline TreResult tre(const LandmarkSet& fixed_pts, const LandmarkSet& moving_pts, const DisplacementField& d) {
  if (fixed_pts.points.size() != moving_pts.points.size())
    throw Error(Errc::LengthMismatch, "tre: landmark lists differ in length");
  TreResult r;
  const auto& g = d.grid;
  double s = 0.0;
  for (std::size_t n = 0; n < fixed_pts.points.size(); ++n) {
    const Vec3& pf = fixed_pts.points[n];
    const Vec3& pm = moving_pts.points[n];
    const Vec3 vox = g.voxel(pf);
    for (int a = 0; a < 3; ++a)
      if (!(vox[a] >= -1e-9 && vox[a] <= static_cast<double>(g.dims[a] - 1) + 1e-9))
        throw Error(Errc::OutOfExtent, "tre: landmark " + std::to_string(n) + " outside the field extent");
    const TrilinearStencil st(g, vox);
    double e2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double diff = pf[a] + st.value(d.comp[a]) - pm[a];
      e2 += diff * diff;
    }
    r.per_landmark.push_back(std::sqrt(e2));
    s += r.per_landmark.back();
  }
  if (!r.per_landmark.empty()) r.mean = s / static_cast<double>(r.per_landmark.size());
  return r;
}

}  // namespace mireg
