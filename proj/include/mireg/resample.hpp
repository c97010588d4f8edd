#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mireg/image.hpp"
#include "mireg/sampling.hpp"

namespace mireg {

/// Warp several scalar channels sharing `d.grid` through phi(x) = x + d(x).
inline std::vector<std::vector<double>> warp_channels(std::span<const std::vector<double>> channels,
                                                      const DisplacementField& d) {
  const auto& g = d.grid;
  std::vector<std::vector<double>> out(channels.size(), std::vector<double>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const TrilinearStencil st(g, displaced_position(g, i, d.at(i)));
    for (std::size_t c = 0; c < channels.size(); ++c) out[c][i] = st.value(channels[c]);
  }
  return out;
}

/// Adjoint of warp_channels w.r.t. the displacement: accumulates
/// sum_c g_out[c](x) * d(sample)/d(d(x)) into grad (mm units).
inline void warp_channels_backward(std::span<const std::vector<double>> channels, const DisplacementField& d,
                                   std::span<const std::vector<double>> g_out, DisplacementField& grad) {
  const auto& g = d.grid;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const TrilinearStencil st(g, displaced_position(g, i, d.at(i)));
    Vec3 acc{0.0, 0.0, 0.0};
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const double go = g_out[c][i];
      if (go == 0.0) continue;
      const Vec3 sg = st.gradient(channels[c]);
      acc[0] += go * sg[0];
      acc[1] += go * sg[1];
      acc[2] += go * sg[2];
    }
    for (int a = 0; a < 3; ++a) grad.comp[a][i] += acc[a] / g.spacing[a];
  }
}

/// out(x) = vol(x + d(x)/spacing), trilinear with clamped borders.
inline Volume warp_volume(const Volume& vol, const DisplacementField& d) {
  require_same_grid(vol.grid, d.grid, "warp_volume");
  Volume out(vol.grid);
  for (std::size_t i = 0; i < vol.grid.size(); ++i)
    out.data[i] = trilinear_sample(vol, displaced_position(vol.grid, i, d.at(i)));
  return out;
}

/// Nearest-neighbour warp for label maps; positions are clamped to the grid.
inline LabelMap warp_labels(const LabelMap& labels, const DisplacementField& d) {
  require_same_grid(labels.grid, d.grid, "warp_labels");
  const auto& g = labels.grid;
  LabelMap out(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 p = displaced_position(g, i, d.at(i));
    Index3 n{};
    for (int a = 0; a < 3; ++a)
      n[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::lround(p[a])), 0, g.dims[a] - 1);
    out.data[i] = labels.data[g.index(n[0], n[1], n[2])];
  }
  return out;
}

/// 2x2x2 mean pooling. Output dims are ceil(dims/2); trailing odd planes form
/// one-voxel-wide blocks. Spacing doubles and the origin moves to the centre
/// of the first block.
inline Volume downsample2(const Volume& vol) {
  const auto& gi = vol.grid;
  for (int a = 0; a < 3; ++a)
    if (gi.dims[a] < 4) throw Error(Errc::TooSmall, "downsample2 needs every dim >= 4, got " + gi.describe());
  GridSpec go;
  for (int a = 0; a < 3; ++a) {
    go.dims[a] = (gi.dims[a] + 1) / 2;
    go.spacing[a] = 2.0 * gi.spacing[a];
    go.origin[a] = gi.origin[a] + 0.5 * gi.spacing[a];
  }
  Volume out(go);
  for (std::int64_t k = 0; k < go.dims[2]; ++k)
    for (std::int64_t j = 0; j < go.dims[1]; ++j)
      for (std::int64_t i = 0; i < go.dims[0]; ++i) {
        double s = 0.0;
        int n = 0;
        for (std::int64_t kk = 2 * k; kk < std::min(2 * k + 2, gi.dims[2]); ++kk)
          for (std::int64_t jj = 2 * j; jj < std::min(2 * j + 2, gi.dims[1]); ++jj)
            for (std::int64_t ii = 2 * i; ii < std::min(2 * i + 2, gi.dims[0]); ++ii) {
              s += vol.at(ii, jj, kk);
              ++n;
            }
        out.at(i, j, k) = s / n;
      }
  return out;
}

/// Coarsest level first; the last element is `vol` itself.
inline std::vector<Volume> build_pyramid(const Volume& vol, int levels) {
  if (levels < 1) throw Error(Errc::InvalidArgument, "pyramid needs at least one level");
  std::vector<Volume> pyr(static_cast<std::size_t>(levels));
  pyr.back() = vol;
  for (int l = levels - 2; l >= 0; --l) pyr[l] = downsample2(pyr[l + 1]);
  return pyr;
}

/// Grid of downsample2 applied to `g`, without touching any data.
inline GridSpec coarse_grid(const GridSpec& g) {
  GridSpec go;
  for (int a = 0; a < 3; ++a) {
    go.dims[a] = (g.dims[a] + 1) / 2;
    go.spacing[a] = 2.0 * g.spacing[a];
    go.origin[a] = g.origin[a] + 0.5 * g.spacing[a];
  }
  return go;
}

/// Trilinear transfer of a coarse field onto the next finer pyramid grid.
/// Values are millimetres and are not rescaled.
template <class Tag>
VectorField<Tag> upsample_field(const VectorField<Tag>& src, const GridSpec& target) {
  target.validate();
  for (int a = 0; a < 3; ++a)
    if (src.grid.dims[a] != (target.dims[a] + 1) / 2)
      throw Error(Errc::GridMismatch, "upsample_field: source " + src.grid.describe() +
                                          " is not the 2x coarsening of " + target.describe());
  VectorField<Tag> out(target);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto c = target.coords(i);
    const Vec3 w = target.world({double(c[0]), double(c[1]), double(c[2])});
    const TrilinearStencil st(src.grid, src.grid.voxel(w));
    for (int a = 0; a < 3; ++a) out.comp[a][i] = st.value(src.comp[a]);
  }
  return out;
}

/// Affine min-max rescale onto [0, 255].
inline Volume normalize_intensity(const Volume& vol) {
  const auto [lo, hi] = std::minmax_element(vol.data.begin(), vol.data.end());
  if (lo == vol.data.end() || *lo == *hi) throw Error(Errc::ConstantVolume, "cannot normalize a constant volume");
  const double mn = *lo, range = *hi - *lo;
  Volume out(vol.grid);
  for (std::size_t i = 0; i < vol.data.size(); ++i) out.data[i] = (vol.data[i] - mn) / range * 255.0;
  return out;
}

}  // namespace mireg
