#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "crdql/topology.hpp"

using namespace crdql;

TEST(WrapDistance, IdentityIsZero) {
  GridSpec g;
  EXPECT_EQ(wrap_distance({123.0, 45.0}, {123.0, 45.0}, g), 0.0);
}

TEST(WrapDistance, CrossesBothEdges) {
  GridSpec g;  // 600 x 600 torus
  EXPECT_NEAR(wrap_distance({0.0, 0.0}, {400.0, 400.0}, g), std::sqrt(2.0) * 200.0, 1e-9);
  EXPECT_NEAR(wrap_distance({10.0, 300.0}, {590.0, 300.0}, g), 20.0, 1e-9);
}

TEST(WrapDistance, SymmetricAndBoundedByHalfDiagonal) {
  GridSpec g;
  Rng rng(3);
  const double bound = std::hypot(g.width() / 2, g.height() / 2);
  for (int i = 0; i < 1000; ++i) {
    Point a{uniform01(rng) * g.width(), uniform01(rng) * g.height()};
    Point b{uniform01(rng) * g.width(), uniform01(rng) * g.height()};
    EXPECT_DOUBLE_EQ(wrap_distance(a, b, g), wrap_distance(b, a, g));
    EXPECT_LE(wrap_distance(a, b, g), bound + 1e-9);
  }
}

TEST(GridSpec, Validation) {
  GridSpec g;
  EXPECT_NO_THROW(g.validate());
  g.active_ap_count = 10;
  EXPECT_THROW(g.validate(), ConfigError);
  g = {};
  g.spacing_m = 0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = {};
  g.cr_link_radius_m = -1;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Placement, CountsAndRadii) {
  GridSpec g;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const NodePlacement p = sample_placement(g, 5, rng);
    ASSERT_EQ(p.ap_positions.size(), 9u);
    ASSERT_EQ(p.n_pn(), 7);
    ASSERT_EQ(p.n_cr(), 5);
    ASSERT_EQ(p.cr_rx_positions.size(), 5u);
    EXPECT_TRUE(std::is_sorted(p.active_ap_indices.begin(), p.active_ap_indices.end()));
    EXPECT_EQ(std::set<int>(p.active_ap_indices.begin(), p.active_ap_indices.end()).size(), 7u);
    for (int i = 0; i < p.n_pn(); ++i)
      EXPECT_LE(wrap_distance(p.active_ap(i), p.pn_rx_positions[i], g), g.coverage_radius() + 1e-9);
    for (int k = 0; k < p.n_cr(); ++k) {
      EXPECT_LE(wrap_distance(p.cr_tx_positions[k], p.cr_rx_positions[k], g), g.cr_link_radius_m + 1e-9);
      for (Point q : {p.cr_tx_positions[k], p.cr_rx_positions[k]}) {
        EXPECT_GE(q.x, 0.0);
        EXPECT_LT(q.x, g.width());
        EXPECT_GE(q.y, 0.0);
        EXPECT_LT(q.y, g.height());
      }
    }
  }
}

TEST(Placement, ApCentersOnGrid) {
  GridSpec g;
  Rng rng(1);
  const NodePlacement p = sample_placement(g, 2, rng);
  EXPECT_EQ(p.ap_positions[0], (Point{100.0, 100.0}));
  EXPECT_EQ(p.ap_positions[4], (Point{300.0, 300.0}));
  EXPECT_EQ(p.ap_positions[8], (Point{500.0, 500.0}));
}

TEST(Placement, SameSeedSamePlacement) {
  GridSpec g;
  Rng a(99), b(99);
  EXPECT_EQ(sample_placement(g, 3, a), sample_placement(g, 3, b));
}

// Uniform over a disk: P(r <= R/2) = 1/4.
TEST(DiskSampling, InnerHalfRadiusHoldsQuarterOfMass) {
  GridSpec g;
  Rng rng(7);
  const Point c{300.0, 300.0};
  const int n = 100000;
  int inner = 0;
  for (int i = 0; i < n; ++i)
    if (wrap_distance(c, sample_in_disk(c, 50.0, g, rng), g) <= 25.0) ++inner;
  EXPECT_NEAR(static_cast<double>(inner) / n, 0.25, 0.01);
}

TEST(Placement, JsonRoundTrip) {
  GridSpec g;
  Rng rng(5);
  const NodePlacement p = sample_placement(g, 4, rng);
  const nlohmann::json j = p;
  EXPECT_EQ(j.get<NodePlacement>(), p);
  const nlohmann::json gj = g;
  const GridSpec g2 = gj.get<GridSpec>();
  EXPECT_EQ(g2.rows, g.rows);
  EXPECT_EQ(g2.spacing_m, g.spacing_m);
  EXPECT_EQ(g2.active_ap_count, g.active_ap_count);
}
