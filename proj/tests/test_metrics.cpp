#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace mireg;
using namespace mireg::testing;

namespace {

LabelMap random_blobs(const GridSpec& g, Rng& rng, int n_labels) {
  LabelMap m(g);
  for (int l = 1; l <= n_labels; ++l) {
    const Vec3 c{rng.uniform(2, double(g.dims[0] - 3)), rng.uniform(2, double(g.dims[1] - 3)),
                 rng.uniform(2, double(g.dims[2] - 3))};
    const double r = rng.uniform(1.5, 3.5);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Vec3 p = g.coords_f(i);
      if (std::hypot(p[0] - c[0], p[1] - c[1], p[2] - c[2]) <= r) m.data[i] = l;
    }
  }
  return m;
}

LandmarkSet random_points(const GridSpec& g, Rng& rng, int n) {
  LandmarkSet s;
  for (int i = 0; i < n; ++i) {
    Vec3 v{};
    for (int a = 0; a < 3; ++a) v[a] = rng.uniform(0.0, double(g.dims[a] - 1));
    s.points.push_back(g.world(v));
  }
  return s;
}

}  // namespace

TEST(Dice, HandCases) {
  const GridSpec g = make_grid(4, 4, 4);
  LabelMap a(g), b(g);
  a.data[0] = a.data[1] = 1;
  b.data[1] = b.data[2] = 1;
  const auto r = dice(a, b);
  EXPECT_EQ(r.per_label.at(1), 0.5);
  EXPECT_EQ(*r.mean, 0.5);
  EXPECT_EQ(*dice(a, a).mean, 1.0);
  LabelMap c(g);
  c.data[10] = 1;
  EXPECT_EQ(*dice(a, c).mean, 0.0);
  EXPECT_FALSE(dice(LabelMap(g), LabelMap(g)).mean.has_value());
  EXPECT_THROW(dice(a, LabelMap(make_grid(4, 4, 5))), Error);
}

TEST(Dice, LabelInOneMapScoresZero) {
  const GridSpec g = make_grid(3, 3, 3);
  LabelMap a(g), b(g);
  a.data[0] = 1;
  b.data[0] = 1;
  a.data[5] = 2;
  const auto r = dice(a, b);
  EXPECT_EQ(r.per_label.at(1), 1.0);
  EXPECT_EQ(r.per_label.at(2), 0.0);
  EXPECT_EQ(*r.mean, 0.5);
}

TEST(Dice, MatchesOracleAndIsSymmetric) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    Rng rng(s);
    const GridSpec g = make_grid(10, 11, 12);
    const auto a = random_blobs(g, rng, 3), b = random_blobs(g, rng, 3);
    const auto r = dice(a, b), q = dice(b, a);
    const auto o = oracle::dice(a, b);
    ASSERT_EQ(r.per_label.size(), o.size());
    for (const auto& [l, v] : o) {
      EXPECT_NEAR(r.per_label.at(l), v, 1e-9);
      EXPECT_EQ(r.per_label.at(l), q.per_label.at(l));
    }
  }
}

TEST(Hd95, HandCases) {
  const GridSpec g = make_grid(8, 4, 4);
  LabelMap a(g), b(g);
  a.data[g.index(1, 1, 1)] = 1;
  b.data[g.index(4, 1, 1)] = 1;
  EXPECT_DOUBLE_EQ(hd95(a, b, 1), 3.0);
  EXPECT_EQ(hd95(a, a, 1), 0.0);
  EXPECT_THROW(hd95(a, LabelMap(g), 1), Error);
  EXPECT_THROW(hd95(a, b, 2), Error);
}

TEST(Hd95, MatchesAllPairsOracle) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    Rng rng(100 + s);
    const GridSpec g = make_grid(12, 12, 12, {1.0, 0.8, 1.3});
    const auto a = random_blobs(g, rng, 1), b = random_blobs(g, rng, 1);
    const double h = hd95(a, b, 1);
    EXPECT_NEAR(h, oracle::hd95(a, b, 1), 1e-9);
    EXPECT_EQ(h, hd95(b, a, 1));
  }
}

TEST(Tre, HandCases) {
  const GridSpec g = make_grid(16, 16, 16);
  const LandmarkSet f{{{10, 10, 10}}}, m{{{12, 10, 10}}};
  DisplacementField d(g);
  EXPECT_DOUBLE_EQ(*tre(f, m, d).mean, 2.0);
  d.comp[0].assign(g.size(), 2.0);
  EXPECT_DOUBLE_EQ(*tre(f, m, d).mean, 0.0);
  EXPECT_EQ(*tre(f, f, DisplacementField(g)).mean, 0.0);
}

TEST(Tre, EmptyListsAreNotApplicable) {
  const auto r = tre({}, {}, DisplacementField(make_grid(4, 4, 4)));
  EXPECT_FALSE(r.mean.has_value());
  EXPECT_TRUE(r.per_landmark.empty());
}

TEST(Tre, Errors) {
  const GridSpec g = make_grid(4, 4, 4);
  const LandmarkSet one{{{1, 1, 1}}}, two{{{1, 1, 1}, {2, 2, 2}}}, outside{{{9, 1, 1}}};
  try {
    tre(one, two, DisplacementField(g));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
  try {
    tre(outside, one, DisplacementField(g));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OutOfExtent);
  }
}

TEST(Tre, MatchesOracle) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    Rng rng(200 + s);
    const GridSpec g = make_grid(9, 10, 8, {1.0, 1.5, 0.7}, {-4.0, 3.0, 1.0});
    const auto f = random_points(g, rng, 20), m = random_points(g, rng, 20);
    const auto d = random_field<DisplacementTag>(g, rng, 2.0);
    EXPECT_NEAR(*tre(f, m, d).mean, oracle::tre_mean(f, m, d), 1e-9);
    // zero field: plain mean Euclidean distance, exactly
    double plain = 0.0;
    for (std::size_t i = 0; i < 20; ++i)
      plain += std::sqrt((f.points[i][0] - m.points[i][0]) * (f.points[i][0] - m.points[i][0]) +
                         (f.points[i][1] - m.points[i][1]) * (f.points[i][1] - m.points[i][1]) +
                         (f.points[i][2] - m.points[i][2]) * (f.points[i][2] - m.points[i][2]));
    EXPECT_NEAR(*tre(f, m, DisplacementField(g)).mean, plain / 20.0, 1e-12);
  }
}

TEST(NdvMetric, MatchesOracle) {
  for (std::uint64_t s = 0; s < 25; ++s) {
    Rng rng(300 + s);
    const GridSpec g = make_grid(7, 6, 8, {1.0, 1.2, 0.9});
    const auto d = random_field<DisplacementTag>(g, rng, 1.2);
    EXPECT_NEAR(ndv_metric(d), oracle::ndv(d), 1e-9);
  }
}
