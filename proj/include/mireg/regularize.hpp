#pragma once

#include <cmath>
#include <cstdint>

#include "mireg/image.hpp"
#include "mireg/transform.hpp"

namespace mireg {

/// Weights of the four-term registration objective.
struct LossWeights {
  double similarity = 1.0;   ///< lambda1: 1 for NCC, 10 for MIND
  double smoothness = 1.0;   ///< lambda2 (diffusion)
  double group = 40.0;       ///< lambda3 (group consistency)
  double folding = 1e-5;     ///< lambda4 (NDV penalty)

  static LossWeights for_ncc() { return {1.0, 1.0, 40.0, 1e-5}; }
  static LossWeights for_mind() { return {10.0, 1.0, 40.0, 1e-5}; }

  void validate() const {
    for (double w : {similarity, smoothness, group, folding})
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(Errc::InvalidArgument, "loss weights must be finite and >= 0");
  }
};

/// Diffusion regulariser: squared forward differences of d in voxel units,
/// averaged over the valid differences of each (component, axis) pair and
/// then over the nine pairs.
inline FieldLoss diffusion_loss(const DisplacementField& d) {
  const auto& g = d.grid;
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] < 3) throw Error(Errc::TooSmall, "diffusion_loss needs every dim >= 3");
  FieldLoss out{0.0, DisplacementField(g)};
  const std::int64_t stride[3] = {1, g.dims[0], g.dims[0] * g.dims[1]};
  for (int b = 0; b < 3; ++b) {
    const auto pairs = static_cast<double>(g.size() / g.dims[b] * (g.dims[b] - 1));
    const double w = 1.0 / (9.0 * pairs);
    for (int a = 0; a < 3; ++a) {
      const auto& f = d.comp[a];
      auto& gr = out.grad.comp[a];
      const double inv_s = 1.0 / g.spacing[a];
      std::size_t idx = 0;
      for (std::int64_t k = 0; k < g.dims[2]; ++k)
        for (std::int64_t j = 0; j < g.dims[1]; ++j)
          for (std::int64_t i = 0; i < g.dims[0]; ++i, ++idx) {
            const Index3 c{i, j, k};
            if (c[b] == g.dims[b] - 1) continue;
            const std::size_t nb = idx + static_cast<std::size_t>(stride[b]);
            const double diff = (f[nb] - f[idx]) * inv_s;
            out.value += w * diff * diff;
            const double gd = 2.0 * w * diff * inv_s;
            gr[nb] += gd;
            gr[idx] -= gd;
          }
    }
  }
  return out;
}

struct GroupLoss {
  double value = 0.0;
  DisplacementField grad_ab, grad_bc, grad_ac;
};

/// Two-hop cycle residual: mean over voxels of |(phi_BC o phi_AB)(x) - phi_AC(x)|^2
/// measured in voxel units.
inline GroupLoss group_consistency_loss(const DisplacementField& d_ab, const DisplacementField& d_bc,
                                        const DisplacementField& d_ac) {
  require_same_grid(d_ab.grid, d_bc.grid, "group_consistency_loss");
  require_same_grid(d_ab.grid, d_ac.grid, "group_consistency_loss");
  const auto& g = d_ab.grid;
  const DisplacementField chained = compose(d_bc, d_ab);
  GroupLoss out{0.0, DisplacementField(g), DisplacementField(g), DisplacementField(g)};
  DisplacementField g_res(g);
  const double inv_n = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      const double inv_s = 1.0 / g.spacing[a];
      const double r = (chained.comp[a][i] - d_ac.comp[a][i]) * inv_s;
      out.value += r * r * inv_n;
      g_res.comp[a][i] = 2.0 * r * inv_s * inv_n;
      out.grad_ac.comp[a][i] = -g_res.comp[a][i];
    }
  compose_backward(d_bc, d_ab, g_res, &out.grad_bc, &out.grad_ab);
  return out;
}

struct LossTerms {
  double similarity = 0.0;
  double smoothness = 0.0;
  double group = 0.0;
  double folding = 0.0;
};

inline double total_loss(const LossTerms& t, const LossWeights& w) {
  for (double v : {t.similarity, t.smoothness, t.group, t.folding})
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "total_loss: non-finite term");
  return w.similarity * t.similarity + w.smoothness * t.smoothness + w.group * t.group + w.folding * t.folding;
}

}  // namespace mireg
