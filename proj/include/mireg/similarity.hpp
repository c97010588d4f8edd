#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/resample.hpp"
#include "mireg/sampling.hpp"
#include "mireg/transform.hpp"

namespace mireg {

// ---------------------------------------------------------------------------
// Local normalised cross-correlation
// ---------------------------------------------------------------------------

inline constexpr double kDefaultNccEpsilon = 1e-5;

namespace detail {

/// Box sum over a (2r+1)^3 window truncated at the volume border, done as
/// three separable 1D running sums.
inline std::vector<double> box_sum(std::span<const double> in, const Index3& dims, std::int64_t r) {
  std::vector<double> cur(in.begin(), in.end()), next(in.size());
  std::vector<double> line, prefix;
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t n = dims[axis];
    const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
    const std::int64_t lines = static_cast<std::int64_t>(in.size()) / n;
    line.resize(static_cast<std::size_t>(n));
    prefix.resize(static_cast<std::size_t>(n) + 1);
    for (std::int64_t l = 0; l < lines; ++l) {
      // start offset of line l: decompose l over the two other axes
      std::int64_t start;
      if (axis == 0) {
        start = l * n;
      } else if (axis == 1) {
        start = (l % dims[0]) + (l / dims[0]) * dims[0] * dims[1];
      } else {
        start = l;
      }
      prefix[0] = 0.0;
      for (std::int64_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + cur[start + t * stride];
      for (std::int64_t t = 0; t < n; ++t) {
        const std::int64_t lo = std::max<std::int64_t>(0, t - r), hi = std::min<std::int64_t>(n - 1, t + r);
        next[start + t * stride] = prefix[hi + 1] - prefix[lo];
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

inline std::vector<double> box_count(const Index3& dims, std::int64_t r) {
  std::vector<double> out(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
  auto cnt = [r](std::int64_t t, std::int64_t n) {
    return static_cast<double>(std::min(n - 1, t + r) - std::max<std::int64_t>(0, t - r) + 1);
  };
  std::size_t idx = 0;
  for (std::int64_t k = 0; k < dims[2]; ++k)
    for (std::int64_t j = 0; j < dims[1]; ++j)
      for (std::int64_t i = 0; i < dims[0]; ++i) out[idx++] = cnt(i, dims[0]) * cnt(j, dims[1]) * cnt(k, dims[2]);
  return out;
}

}  // namespace detail

struct LnccResult {
  double loss = 0.0;
  std::vector<double> grad_f;  ///< dL/df, empty unless requested
  std::vector<double> grad_m;  ///< dL/dm, empty unless requested
};

/// loss = 1 - mean_x NCC(x), with NCC over a window of `window`^3 voxels
/// centred at x and truncated at the border:
///   NCC = cov(f,m) / sqrt((var f + eps)(var m + eps)).
/// The loss is symmetric in (f, m), so grad_f comes out of the same pass.
inline LnccResult lncc(const Volume& f, const Volume& m, int window, double eps = kDefaultNccEpsilon,
                       bool with_grad = true) {
  require_same_grid(f.grid, m.grid, "lncc");
  if (window < 3 || window % 2 == 0) throw Error(Errc::BadWindow, "lncc window must be odd and >= 3");
  const auto& dims = f.grid.dims;
  const std::int64_t r = window / 2;
  const std::size_t n_vox = f.grid.size();

  std::vector<double> ff(n_vox), mm(n_vox), fm(n_vox);
  for (std::size_t i = 0; i < n_vox; ++i) {
    ff[i] = f.data[i] * f.data[i];
    mm[i] = m.data[i] * m.data[i];
    fm[i] = f.data[i] * m.data[i];
  }
  const auto cnt = detail::box_count(dims, r);
  const auto sf = detail::box_sum(f.data, dims, r);
  const auto sm = detail::box_sum(m.data, dims, r);
  const auto sff = detail::box_sum(ff, dims, r);
  const auto smm = detail::box_sum(mm, dims, r);
  const auto sfm = detail::box_sum(fm, dims, r);

  LnccResult res;
  std::vector<double> alpha_f, beta_f, gamma_f, alpha_m, beta_m, gamma_m;
  if (with_grad) {
    for (auto* v : {&alpha_f, &beta_f, &gamma_f, &alpha_m, &beta_m, &gamma_m}) v->resize(n_vox);
  }
  double ncc_sum = 0.0;
  for (std::size_t i = 0; i < n_vox; ++i) {
    const double n = cnt[i];
    const double mf = sf[i] / n, mmu = sm[i] / n;
    const double cov = sfm[i] / n - mf * mmu;
    const double a = sff[i] / n - mf * mf + eps;
    const double b = smm[i] / n - mmu * mmu + eps;
    const double root = std::sqrt(a * b);
    const double ncc = cov / root;
    ncc_sum += ncc;
    if (with_grad) {
      // dNCC(y)/dm_x = alpha f_x + beta m_x + gamma for every x in W(y)
      const double al = 1.0 / (n * root);
      const double bm = -ncc / (n * b);
      alpha_m[i] = al;
      beta_m[i] = bm;
      gamma_m[i] = -al * mf - bm * mmu;
      const double bf = -ncc / (n * a);
      alpha_f[i] = al;
      beta_f[i] = bf;
      gamma_f[i] = -al * mmu - bf * mf;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n_vox);
  res.loss = 1.0 - ncc_sum * inv_n;
  if (!with_grad) return res;

  // The truncated window is symmetric: x in W(y) iff y in W(x), so the
  // adjoint of the window gather is the same box sum.
  const auto a_m = detail::box_sum(alpha_m, dims, r), b_m = detail::box_sum(beta_m, dims, r),
             c_m = detail::box_sum(gamma_m, dims, r);
  const auto a_f = detail::box_sum(alpha_f, dims, r), b_f = detail::box_sum(beta_f, dims, r),
             c_f = detail::box_sum(gamma_f, dims, r);
  res.grad_m.resize(n_vox);
  res.grad_f.resize(n_vox);
  for (std::size_t i = 0; i < n_vox; ++i) {
    res.grad_m[i] = -inv_n * (f.data[i] * a_m[i] + m.data[i] * b_m[i] + c_m[i]);
    res.grad_f[i] = -inv_n * (m.data[i] * a_f[i] + f.data[i] * b_f[i] + c_f[i]);
  }
  return res;
}

inline double lncc_loss(const Volume& f, const Volume& m, int window, double eps = kDefaultNccEpsilon) {
  return lncc(f, m, window, eps, false).loss;
}

// ---------------------------------------------------------------------------
// MIND
// ---------------------------------------------------------------------------

struct MindConfig {
  int patch_radius = 1;
  /// Relative floor on V(x), as a fraction of the volume-wide mean patch distance.
  double relative_floor = 1e-6;
  /// Used when the relative floor collapses (e.g. constant volumes).
  double absolute_floor = 1e-12;
};

inline constexpr int kMindChannels = 6;

inline constexpr std::array<Index3, kMindChannels> kMindOffsets{
    {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

/// Six max-normalised self-similarity channels, one per axis-aligned offset.
struct DescriptorField {
  GridSpec grid;
  std::array<std::vector<double>, kMindChannels> channels;
};

inline DescriptorField mind_descriptor(const Volume& vol, const MindConfig& cfg = {}) {
  if (cfg.patch_radius < 1) throw Error(Errc::InvalidArgument, "MIND patch radius must be >= 1");
  if (!(cfg.relative_floor > 0.0) || !(cfg.absolute_floor > 0.0))
    throw Error(Errc::InvalidArgument, "MIND variance floor must be positive");
  const auto& g = vol.grid;
  const auto& dims = g.dims;
  const std::int64_t p = cfg.patch_radius;
  const std::size_t n_vox = g.size();
  auto clampi = [](std::int64_t v, std::int64_t n) { return std::clamp<std::int64_t>(v, 0, n - 1); };
  auto value = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return vol.data[g.index(clampi(i, dims[0]), clampi(j, dims[1]), clampi(k, dims[2]))];
  };

  DescriptorField out{g, {}};
  std::array<std::vector<double>, kMindChannels> dist;
  const double patch_n = static_cast<double>((2 * p + 1) * (2 * p + 1) * (2 * p + 1));
  for (int c = 0; c < kMindChannels; ++c) {
    const auto& o = kMindOffsets[c];
    dist[c].resize(n_vox);
    std::size_t idx = 0;
    for (std::int64_t k = 0; k < dims[2]; ++k)
      for (std::int64_t j = 0; j < dims[1]; ++j)
        for (std::int64_t i = 0; i < dims[0]; ++i, ++idx) {
          double s = 0.0;
          for (std::int64_t qz = -p; qz <= p; ++qz)
            for (std::int64_t qy = -p; qy <= p; ++qy)
              for (std::int64_t qx = -p; qx <= p; ++qx) {
                const double df = value(i + qx, j + qy, k + qz) - value(i + o[0] + qx, j + o[1] + qy, k + o[2] + qz);
                s += df * df;
              }
          dist[c][idx] = s / patch_n;
        }
  }

  double mean_dist = 0.0;
  for (const auto& d : dist)
    for (double x : d) mean_dist += x;
  mean_dist /= static_cast<double>(n_vox * kMindChannels);
  const double floor = std::max(cfg.relative_floor * mean_dist, cfg.absolute_floor);

  for (auto& ch : out.channels) ch.resize(n_vox);
  for (std::size_t i = 0; i < n_vox; ++i) {
    double var = 0.0;
    for (int c = 0; c < kMindChannels; ++c) var += dist[c][i];
    var = std::max(var / kMindChannels, floor);
    double mx = 0.0;
    for (int c = 0; c < kMindChannels; ++c) {
      out.channels[c][i] = std::exp(-dist[c][i] / var);
      mx = std::max(mx, out.channels[c][i]);
    }
    for (int c = 0; c < kMindChannels; ++c) out.channels[c][i] /= mx;
  }
  return out;
}

namespace detail {

/// mean over voxels and channels of (a - b)^2 plus its gradients.
inline double descriptor_sse(const std::array<std::vector<double>, kMindChannels>& a,
                             const std::vector<std::vector<double>>& b, std::vector<std::vector<double>>* g_a,
                             std::vector<std::vector<double>>* g_b) {
  const std::size_t n_vox = a[0].size();
  const double inv = 1.0 / static_cast<double>(n_vox * kMindChannels);
  double s = 0.0;
  if (g_a) g_a->assign(kMindChannels, std::vector<double>(n_vox));
  if (g_b) g_b->assign(kMindChannels, std::vector<double>(n_vox));
  for (int c = 0; c < kMindChannels; ++c)
    for (std::size_t i = 0; i < n_vox; ++i) {
      const double r = a[c][i] - b[c][i];
      s += r * r;
      if (g_a) (*g_a)[c][i] = 2.0 * r * inv;
      if (g_b) (*g_b)[c][i] = -2.0 * r * inv;
    }
  return s * inv;
}

}  // namespace detail

/// mean over voxels and channels of (df - dm o phi)^2. The moving descriptor
/// is warped channel by channel rather than recomputed on the warped image.
inline FieldLoss mind_loss(const DescriptorField& df, const DescriptorField& dm, const DisplacementField& d) {
  require_same_grid(df.grid, dm.grid, "mind_loss");
  require_same_grid(df.grid, d.grid, "mind_loss");
  const auto warped = warp_channels(dm.channels, d);
  std::vector<std::vector<double>> g_w;
  FieldLoss out{detail::descriptor_sse(df.channels, warped, nullptr, &g_w), DisplacementField(d.grid)};
  warp_channels_backward(dm.channels, d, g_w, out.grad);
  return out;
}

// ---------------------------------------------------------------------------
// Correlation volume and vector-field attention
// ---------------------------------------------------------------------------

/// Correlation of a's features at x with b's features at x + o for every
/// integer offset o in [-radius, radius]^3.
struct CostVolume {
  GridSpec grid;
  int radius = 1;
  std::vector<std::vector<double>> values;  ///< [offset][voxel]

  int side() const noexcept { return 2 * radius + 1; }
  std::size_t candidates() const noexcept { return static_cast<std::size_t>(side() * side() * side()); }
  Index3 offset(std::size_t o) const noexcept {
    const auto s = static_cast<std::int64_t>(side());
    const auto oi = static_cast<std::int64_t>(o);
    return {oi % s - radius, (oi / s) % s - radius, oi / (s * s) - radius};
  }
};

namespace detail {

using FeatureStack = std::vector<std::vector<double>>;  ///< [feature][voxel]

/// Intensity features: the 3x3x3 clamped patch around each voxel with its
/// mean removed, so the normalised inner product is a patch NCC.
inline FeatureStack standardized_patches(const Volume& vol) {
  const auto& g = vol.grid;
  auto clampi = [](std::int64_t v, std::int64_t n) { return std::clamp<std::int64_t>(v, 0, n - 1); };
  FeatureStack feats(27, std::vector<double>(g.size()));
  std::size_t idx = 0;
  for (std::int64_t k = 0; k < g.dims[2]; ++k)
    for (std::int64_t j = 0; j < g.dims[1]; ++j)
      for (std::int64_t i = 0; i < g.dims[0]; ++i, ++idx) {
        std::array<double, 27> patch{};
        double mean = 0.0;
        int q = 0;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx, ++q) {
              patch[q] = vol.data[g.index(clampi(i + dx, g.dims[0]), clampi(j + dy, g.dims[1]),
                                          clampi(k + dz, g.dims[2]))];
              mean += patch[q];
            }
        mean /= 27.0;
        for (q = 0; q < 27; ++q) feats[q][idx] = patch[q] - mean;
      }
  return feats;
}

inline CostVolume correlate_features(const GridSpec& g, const FeatureStack& a, const FeatureStack& b, int radius) {
  if (radius < 1) throw Error(Errc::InvalidArgument, "correlation radius must be >= 1");
  CostVolume cv{g, radius, {}};
  const std::size_t n_vox = g.size();
  std::vector<double> na(n_vox, 0.0), nb(n_vox, 0.0);
  for (std::size_t f = 0; f < a.size(); ++f)
    for (std::size_t i = 0; i < n_vox; ++i) {
      na[i] += a[f][i] * a[f][i];
      nb[i] += b[f][i] * b[f][i];
    }
  for (auto& x : na) x = std::sqrt(x);
  for (auto& x : nb) x = std::sqrt(x);
  cv.values.assign(cv.candidates(), std::vector<double>(n_vox));
  auto clampi = [](std::int64_t v, std::int64_t n) { return std::clamp<std::int64_t>(v, 0, n - 1); };
  for (std::size_t o = 0; o < cv.candidates(); ++o) {
    const auto off = cv.offset(o);
    std::size_t idx = 0;
    for (std::int64_t k = 0; k < g.dims[2]; ++k)
      for (std::int64_t j = 0; j < g.dims[1]; ++j)
        for (std::int64_t i = 0; i < g.dims[0]; ++i, ++idx) {
          const std::size_t t =
              g.index(clampi(i + off[0], g.dims[0]), clampi(j + off[1], g.dims[1]), clampi(k + off[2], g.dims[2]));
          const double denom = na[idx] * nb[t];
          if (denom <= 0.0) {
            cv.values[o][idx] = 0.0;
            continue;
          }
          double dot = 0.0;
          for (std::size_t f = 0; f < a.size(); ++f) dot += a[f][idx] * b[f][t];
          cv.values[o][idx] = dot / denom;
        }
  }
  return cv;
}

}  // namespace detail

inline CostVolume correlation_volume(const DescriptorField& a, const DescriptorField& b, int radius) {
  require_same_grid(a.grid, b.grid, "correlation_volume");
  const detail::FeatureStack fa(a.channels.begin(), a.channels.end()), fb(b.channels.begin(), b.channels.end());
  return detail::correlate_features(a.grid, fa, fb, radius);
}

inline CostVolume correlation_volume(const Volume& a, const Volume& b, int radius) {
  require_same_grid(a.grid, b.grid, "correlation_volume");
  return detail::correlate_features(a.grid, detail::standardized_patches(a), detail::standardized_patches(b), radius);
}

/// Softmax(values / temperature) over the candidate cube; the displacement is
/// the expected offset, converted to mm.
inline DisplacementField vfa_displacement(const CostVolume& cv, double temperature) {
  if (!(temperature > 0.0)) throw Error(Errc::InvalidArgument, "vfa temperature must be positive");
  DisplacementField out(cv.grid);
  const std::size_t n_cand = cv.candidates();
  std::vector<Index3> offs(n_cand);
  for (std::size_t o = 0; o < n_cand; ++o) offs[o] = cv.offset(o);
  for (std::size_t i = 0; i < cv.grid.size(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < n_cand; ++o) mx = std::max(mx, cv.values[o][i]);
    double z = 0.0;
    Vec3 acc{0.0, 0.0, 0.0};
    for (std::size_t o = 0; o < n_cand; ++o) {
      const double w = std::exp((cv.values[o][i] - mx) / temperature);
      z += w;
      for (int a = 0; a < 3; ++a) acc[a] += w * static_cast<double>(offs[o][a]);
    }
    for (int a = 0; a < 3; ++a) out.comp[a][i] = acc[a] / z * cv.grid.spacing[a];
  }
  return out;
}

}  // namespace mireg
