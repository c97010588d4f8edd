#include <gtest/gtest.h>

#include "support.hpp"

using namespace mireg;
using mireg::testing::random_volume;

TEST(Grid, WorldVoxelRoundTrip) {
  const GridSpec g = make_grid(5, 6, 7, {0.5, 1.25, 2.0}, {-3.0, 1.0, 10.0});
  const Vec3 v{1.5, 4.0, 6.25};
  const Vec3 w = g.world(v);
  EXPECT_DOUBLE_EQ(w[0], -3.0 + 0.75);
  EXPECT_DOUBLE_EQ(w[1], 1.0 + 5.0);
  EXPECT_DOUBLE_EQ(w[2], 10.0 + 12.5);
  const Vec3 back = g.voxel(w);
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(back[a], v[a], 1e-12);
}

TEST(Grid, IndexLayoutIsXFastest) {
  const GridSpec g = make_grid(3, 4, 5);
  EXPECT_EQ(g.index(1, 0, 0), 1u);
  EXPECT_EQ(g.index(0, 1, 0), 3u);
  EXPECT_EQ(g.index(0, 0, 1), 12u);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = g.coords(i);
    EXPECT_EQ(g.index(c[0], c[1], c[2]), i);
  }
}

TEST(Grid, RejectsBadGeometry) {
  EXPECT_THROW(make_grid(1, 4, 4), Error);
  EXPECT_THROW(make_grid(4, 4, 4, {1.0, 0.0, 1.0}), Error);
  EXPECT_THROW(make_grid(4, 4, 4, {1.0, -1.0, 1.0}), Error);
}

TEST(Volume, ValidatesPayload) {
  const GridSpec g = make_grid(2, 2, 2);
  EXPECT_THROW(Volume(g, std::vector<double>(7, 0.0)), Error);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::nan("");
  try {
    Volume v(g, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFinite);
  }
}

TEST(Trilinear, ConstantVolume) {
  const GridSpec g = make_grid(4, 5, 6);
  const Volume v(g, 7.0);
  Rng rng(1);
  for (int n = 0; n < 50; ++n) {
    const Vec3 p{rng.uniform(-2, 6), rng.uniform(-2, 7), rng.uniform(-2, 8)};
    EXPECT_DOUBLE_EQ(trilinear_sample(v, p), 7.0);
  }
}

TEST(Trilinear, VoxelCentreReturnsVoxel) {
  const GridSpec g = make_grid(4, 5, 6);
  Rng rng(2);
  const Volume v = random_volume(g, rng);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(trilinear_sample(v, g.coords_f(i)), v.data[i]);
}

TEST(Trilinear, CubeCentreIsCornerAverage) {
  const GridSpec g = make_grid(2, 2, 2);
  Volume v(g);
  double direct = 0.0;
  for (int c = 0; c < 8; ++c) {
    v.at(c & 1, (c >> 1) & 1, (c >> 2) & 1) = c;
    direct += c / 8.0;
  }
  EXPECT_DOUBLE_EQ(trilinear_sample(v, {0.5, 0.5, 0.5}), direct);
  EXPECT_DOUBLE_EQ(direct, 3.5);
}

TEST(Trilinear, LinearInValues) {
  const GridSpec g = make_grid(6, 5, 4);
  Rng rng(3);
  const Volume a = random_volume(g, rng, -10, 10), b = random_volume(g, rng, -10, 10);
  const double alpha = 1.7, beta = -0.3;
  Volume c(g);
  for (std::size_t i = 0; i < g.size(); ++i) c.data[i] = alpha * a.data[i] + beta * b.data[i];
  for (int n = 0; n < 100; ++n) {
    const Vec3 p{rng.uniform(-1, 6), rng.uniform(-1, 5), rng.uniform(-1, 4)};
    const double lhs = trilinear_sample(c, p);
    const double rhs = alpha * trilinear_sample(a, p) + beta * trilinear_sample(b, p);
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Trilinear, ClampsOutsideTheGrid) {
  const GridSpec g = make_grid(3, 3, 3);
  Rng rng(4);
  const Volume v = random_volume(g, rng);
  EXPECT_EQ(trilinear_sample(v, {-5.0, 0.0, 0.0}), v.at(0, 0, 0));
  EXPECT_EQ(trilinear_sample(v, {9.0, 2.0, 2.0}), v.at(2, 2, 2));
}

TEST(Trilinear, StencilGradientMatchesDifferences) {
  const GridSpec g = make_grid(6, 6, 6);
  Rng rng(5);
  const Volume v = random_volume(g, rng);
  for (int n = 0; n < 40; ++n) {
    Vec3 p{};
    // stay inside one cell so the sampled function is a polynomial
    for (auto& x : p) x = std::floor(rng.uniform(0.0, 4.0)) + rng.uniform(0.2, 0.8);
    const Vec3 gr = TrilinearStencil(g, p).gradient(v.data);
    for (int a = 0; a < 3; ++a) {
      Vec3 hi = p, lo = p;
      hi[a] += 1e-6;
      lo[a] -= 1e-6;
      const double fd = (trilinear_sample(v, hi) - trilinear_sample(v, lo)) / 2e-6;
      EXPECT_NEAR(gr[a], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Trilinear, IntegerCoordinateUsesLeftCell) {
  const GridSpec g = make_grid(4, 2, 2);
  Volume v(g);
  for (std::int64_t i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) v.at(i, j, k) = static_cast<double>(i * i);
  // v = i^2: the cell [1, 2] has slope 3, the cell [2, 3] slope 5
  EXPECT_DOUBLE_EQ(TrilinearStencil(g, {2.0, 0.5, 0.5}).gradient(v.data)[0], 3.0);
  EXPECT_DOUBLE_EQ(TrilinearStencil(g, {2.5, 0.5, 0.5}).gradient(v.data)[0], 5.0);
}
