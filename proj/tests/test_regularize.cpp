#include <gtest/gtest.h>

#include "support.hpp"

using namespace mireg;
using namespace mireg::testing;

namespace {

DisplacementField constant_field(const GridSpec& g, const Vec3& mm) {
  DisplacementField d(g);
  for (int a = 0; a < 3; ++a) d.comp[a].assign(g.size(), mm[a]);
  return d;
}

// Dyadic values keep sums with small constants exact.
DisplacementField dyadic_field(const GridSpec& g, Rng& rng) {
  DisplacementField d(g);
  for (auto& c : d.comp)
    for (auto& x : c) x = double(std::int64_t(rng.below(2048)) - 1024) / 1024.0;
  return d;
}

}  // namespace

TEST(Diffusion, ConstantFieldIsFree) {
  const GridSpec g = make_grid(5, 4, 6, {1.0, 2.0, 0.5});
  const auto l = diffusion_loss(constant_field(g, {3.0, -1.0, 2.0}));
  EXPECT_EQ(l.value, 0.0);
  for (const auto& c : l.grad.comp)
    for (double x : c) EXPECT_EQ(x, 0.0);
}

TEST(Diffusion, LinearFieldIsOneNinth) {
  // d_x = x in voxel units: exactly one of the nine (component, axis)
  // difference means is 1, the rest are 0
  const GridSpec g = make_grid(6, 5, 4, {2.0, 1.0, 1.0});
  DisplacementField d(g);
  for (std::size_t i = 0; i < g.size(); ++i) d.comp[0][i] = g.coords_f(i)[0] * g.spacing[0];
  EXPECT_NEAR(diffusion_loss(d).value, 1.0 / 9.0, 1e-15);
}

TEST(Diffusion, TranslationInvariantExactly) {
  const GridSpec g = make_grid(6, 6, 6);
  Rng rng(1);
  const auto d = dyadic_field(g, rng);
  auto shifted = d;
  shifted += constant_field(g, {3.0, -0.5, 12.0});
  EXPECT_EQ(diffusion_loss(d).value, diffusion_loss(shifted).value);
}

TEST(Diffusion, GradientMatchesFiniteDifferences) {
  const GridSpec g = make_grid(6, 6, 6, {1.0, 1.5, 0.75});
  Rng rng(2);
  const auto d = random_field<DisplacementTag>(g, rng, 2.0);
  const auto l = diffusion_loss(d);
  const std::function<double(const DisplacementField&)> f = [](const DisplacementField& x) {
    return diffusion_loss(x).value;
  };
  for (int a = 0; a < 3; ++a)
    for (std::size_t idx = 0; idx < g.size(); idx += 7) {
      const double fd = central_difference(d, a, idx, 1e-3 * g.spacing[a], f);
      EXPECT_LE(rel_error(l.grad.comp[a][idx], fd, 1e-12), 1e-6);
    }
}

TEST(Diffusion, NeedsThreeVoxelsPerAxis) { EXPECT_THROW(diffusion_loss(DisplacementField(make_grid(2, 4, 4))), Error); }

TEST(GroupConsistency, Examples) {
  const GridSpec g = make_grid(6, 6, 6, {1.0, 2.0, 0.5});
  const DisplacementField z(g);
  EXPECT_EQ(group_consistency_loss(z, z, z).value, 0.0);
  const Vec3 t{0.5, -1.0, 0.25};
  const auto tt = constant_field(g, t);
  const auto t2 = constant_field(g, {2 * t[0], 2 * t[1], 2 * t[2]});
  EXPECT_NEAR(group_consistency_loss(tt, tt, t2).value, 0.0, 1e-24);
  double norm2 = 0.0;
  for (int a = 0; a < 3; ++a) norm2 += (2 * t[a] / g.spacing[a]) * (2 * t[a] / g.spacing[a]);
  EXPECT_NEAR(group_consistency_loss(tt, tt, z).value, norm2, 1e-12);
}

TEST(GroupConsistency, ZeroWhenCycleCloses) {
  const GridSpec g = make_grid(7, 6, 5);
  Rng rng(3);
  const auto ab = random_field<DisplacementTag>(g, rng, 1.5);
  const auto bc = random_field<DisplacementTag>(g, rng, 1.5);
  EXPECT_EQ(group_consistency_loss(ab, bc, compose(bc, ab)).value, 0.0);
}

TEST(GroupConsistency, GradientMatchesFiniteDifferences) {
  const GridSpec g = make_grid(6, 5, 6, {1.0, 1.2, 0.9});
  Rng rng(4);
  const auto ab = retag<DisplacementTag>(kink_free_velocity(g, rng));
  const auto bc = retag<DisplacementTag>(kink_free_velocity(g, rng));
  const auto ac = random_field<DisplacementTag>(g, rng, 1.0);
  const auto l = group_consistency_loss(ab, bc, ac);
  using F = std::function<double(const DisplacementField&)>;
  const F f_ab = [&](const DisplacementField& x) { return group_consistency_loss(x, bc, ac).value; };
  const F f_bc = [&](const DisplacementField& x) { return group_consistency_loss(ab, x, ac).value; };
  const F f_ac = [&](const DisplacementField& x) { return group_consistency_loss(ab, bc, x).value; };
  for (int n = 0; n < 30; ++n) {
    const int a = int(rng.below(3));
    const auto idx = std::size_t(rng.below(g.size()));
    const double h = 1e-4 * g.spacing[a];
    EXPECT_LE(rel_error(l.grad_ab.comp[a][idx], central_difference(ab, a, idx, h, f_ab), 1e-9), 1e-5);
    EXPECT_LE(rel_error(l.grad_bc.comp[a][idx], central_difference(bc, a, idx, h, f_bc), 1e-9), 1e-5);
    EXPECT_LE(rel_error(l.grad_ac.comp[a][idx], central_difference(ac, a, idx, h, f_ac), 1e-9), 1e-5);
  }
}

TEST(TotalLoss, Examples) {
  EXPECT_NEAR(total_loss({0.2, 0.01, 0.0, 0.0}, LossWeights::for_ncc()), 0.21, 1e-15);
  EXPECT_EQ(total_loss({0.0, 0.0, 0.0, 0.0}, LossWeights::for_ncc()), 0.0);
  EXPECT_NEAR(total_loss({0.05, 0.0, 0.0, 0.0}, LossWeights::for_mind()), 0.5, 1e-15);
}

TEST(TotalLoss, DefaultWeights) {
  const auto n = LossWeights::for_ncc(), m = LossWeights::for_mind();
  EXPECT_EQ(n.similarity, 1.0);
  EXPECT_EQ(m.similarity, 10.0);
  for (const auto& w : {n, m}) {
    EXPECT_EQ(w.smoothness, 1.0);
    EXPECT_EQ(w.group, 40.0);
    EXPECT_EQ(w.folding, 1e-5);
  }
}

TEST(TotalLoss, LinearInEachTerm) {
  const LossWeights w{3.0, 0.5, 40.0, 1e-5};
  const LossTerms base{0.3, 0.2, 0.01, 4.0};
  const double b = total_loss(base, w);
  const double delta = 0.125;
  auto bumped = [&](int k) {
    LossTerms t = base;
    (k == 0 ? t.similarity : k == 1 ? t.smoothness : k == 2 ? t.group : t.folding) += delta;
    return total_loss(t, w);
  };
  EXPECT_NEAR(bumped(0) - b, w.similarity * delta, 1e-12);
  EXPECT_NEAR(bumped(1) - b, w.smoothness * delta, 1e-12);
  EXPECT_NEAR(bumped(2) - b, w.group * delta, 1e-12);
  EXPECT_NEAR(bumped(3) - b, w.folding * delta, 1e-12);
}

TEST(TotalLoss, RejectsBadInputs) {
  EXPECT_THROW(total_loss({std::nan(""), 0, 0, 0}, LossWeights::for_ncc()), Error);
  EXPECT_THROW((LossWeights{-1.0, 1.0, 1.0, 1.0}.validate()), Error);
}
