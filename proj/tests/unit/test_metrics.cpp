#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sasp/metrics.hpp"

using namespace sasp;

namespace {

BinaryMask from_rows(std::size_t w, std::size_t h, std::vector<std::uint8_t> v) { return BinaryMask(w, h, std::move(v)); }

// Best IoU over every mask a threshold can produce: one per distinct score.
double breakpoint_oracle(const std::vector<double>& px, const BinaryMask& gt) {
  std::set<double> distinct(px.begin(), px.end());
  double best = -1.0;
  for (double t : distinct) {
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t k = 0; k < px.size(); ++k) {
      const bool p = px[k] >= t;
      inter += p && gt.data[k];
      uni += p || gt.data[k];
    }
    best = std::max(best, uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
  }
  return best;
}

}  // namespace

TEST(IoUPair, IdenticalAndDisjoint) {
  const auto a = from_rows(2, 2, {1, 1, 0, 0});
  const auto b = from_rows(2, 2, {0, 0, 1, 1});
  EXPECT_EQ(iou_pair(a, a).iou, 1.0);
  EXPECT_EQ(iou_pair(a, b).iou, 0.0);
}

TEST(IoUPair, TopHalfVersusLeftHalf) {
  BinaryMask top(4, 4);
  BinaryMask left(4, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      top.at(x, y) = y < 2;
      left.at(x, y) = x < 2;
    }
  }
  const auto r = iou_pair(top, left);
  EXPECT_EQ(r.intersection, 4u);
  EXPECT_EQ(r.union_, 12u);
  EXPECT_EQ(r.iou, 1.0 / 3.0);
}

TEST(IoUPair, BothEmptyScoresOne) {
  EXPECT_EQ(iou_pair(BinaryMask(3, 3), BinaryMask(3, 3)).iou, 1.0);
  EXPECT_THROW(iou_pair(BinaryMask(3, 3), BinaryMask(3, 2)), ShapeError);
}

TEST(Aggregate, TwoImages) {
  const std::vector<IoU> pairs{{1, 2, 0.5}, {4, 4, 1.0}};
  const auto r = aggregate(pairs);
  EXPECT_EQ(r.giou, 0.75);
  EXPECT_EQ(r.ciou, 5.0 / 6.0);
}

TEST(Aggregate, SingletonAndEmpty) {
  const std::vector<IoU> one{{3, 7, 3.0 / 7.0}};
  EXPECT_EQ(aggregate(one).giou, 3.0 / 7.0);
  EXPECT_EQ(aggregate(one).ciou, 3.0 / 7.0);
  const std::vector<IoU> blanks{iou_pair(BinaryMask(2, 2), BinaryMask(2, 2)), iou_pair(BinaryMask(1, 1), BinaryMask(1, 1))};
  EXPECT_EQ(aggregate(blanks).giou, 1.0);
  EXPECT_EQ(aggregate(blanks).ciou, 1.0);
  EXPECT_THROW(aggregate(std::vector<IoU>{}), ValueError);
}

TEST(Aggregate, PermutationInvariant) {
  std::mt19937_64 rng(51);
  std::vector<IoU> pairs;
  for (int k = 0; k < 12; ++k) pairs.push_back(iou_pair(oracle::random_mask(5, 5, rng), oracle::random_mask(5, 5, rng)));
  const auto base = aggregate(pairs);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const auto r = aggregate(pairs);
    EXPECT_NEAR(r.giou, base.giou, 1e-15);
    EXPECT_EQ(r.ciou, base.ciou);
  }
}

TEST(Binarize, Boundaries) {
  const auto map = SimilarityMap::from_scores({0.1, 0.7, 0.7, 0.3});
  const PatchGeometry geo(2, 4, 4);
  EXPECT_EQ(binarize(map, geo, 0.0).count(), 16u);
  EXPECT_EQ(binarize(map, geo, 1.0).count(), 8u);  // the two tied argmax patches
  EXPECT_THROW(binarize(map, geo, 1.0 + 1e-12), ValueError);
  EXPECT_THROW(binarize(map, geo, -0.01), ValueError);
}

TEST(Binarize, TwoPatchHandComparison) {
  const std::vector<double> px{0.2, 0.8};
  EXPECT_EQ(binarize(px, 2, 1, 0.5).data, (std::vector<std::uint8_t>{0, 1}));
}

TEST(Binarize, LiftReplicatesPatches) {
  const auto map = SimilarityMap::from_scores({0, 1, 2, 3});
  const auto px = lift_to_pixels(map, PatchGeometry(2, 4, 4));
  EXPECT_EQ(px[0 * 4 + 1], 0.0);
  EXPECT_EQ(px[1 * 4 + 3], 1.0 / 3.0);
  EXPECT_EQ(px[3 * 4 + 0], 2.0 / 3.0);
  EXPECT_EQ(px[2 * 4 + 2], 1.0);
}

TEST(Binarize, MonotoneInThreshold) {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto map = SimilarityMap::from_scores(oracle::random_scores(36, rng));
    const PatchGeometry geo(6, 12, 12);
    double t1 = u(rng);
    double t2 = u(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto lo = binarize(map, geo, t1);
    const auto hi = binarize(map, geo, t2);
    for (std::size_t k = 0; k < lo.size(); ++k) EXPECT_LE(hi.data[k], lo.data[k]);
  }
}

TEST(ThresholdGrid, InclusiveEndpoints) {
  const auto g = threshold_grid(0.01);
  EXPECT_EQ(g.size(), 101u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(g[21], 0.21);
  const auto odd = threshold_grid(0.3);
  EXPECT_EQ(odd.back(), 1.0);
  EXPECT_EQ(odd.size(), 5u);  // 0 0.3 0.6 0.9 1
  EXPECT_THROW(threshold_grid(0.0), ValueError);
  EXPECT_THROW(threshold_grid(0.6), ValueError);
}

TEST(GridSearch, TwoPatchSmallestOptimum) {
  const std::vector<double> px{0.2, 0.8};
  const auto s = grid_search_threshold(px, from_rows(2, 1, {0, 1}));
  EXPECT_EQ(s.best_ciou, 1.0);
  EXPECT_EQ(s.best_t, 0.21);
  for (const auto& [t, c] : s.curve) EXPECT_EQ(c == 1.0, t > 0.2 && t <= 0.8) << t;
}

TEST(GridSearch, AllOnesTargetPicksZero) {
  const auto map = SimilarityMap::from_scores({0.4, 0.1, 0.9, 0.3});
  const auto s = grid_search_threshold(map, PatchGeometry(2, 4, 4), BinaryMask(4, 4, 1));
  EXPECT_EQ(s.best_t, 0.0);
  EXPECT_EQ(s.best_ciou, 1.0);
}

TEST(GridSearch, CurveMaxAndNeverAboveBreakpoints) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const auto map = SimilarityMap::from_scores(oracle::random_scores(36, rng));
    const PatchGeometry geo(6, 6, 6);
    const auto gt = oracle::random_mask(6, 6, rng);
    const auto s = grid_search_threshold(map, geo, gt);
    double mx = -1;
    for (const auto& [t, c] : s.curve) mx = std::max(mx, c);
    EXPECT_EQ(s.best_ciou, mx);
    EXPECT_LE(s.best_ciou, breakpoint_oracle(lift_to_pixels(map, geo), gt));
  }
}

TEST(GridSearch, ScoresOnTheStepGridMatchBreakpointsExactly) {
  std::mt19937_64 rng(54);
  std::uniform_int_distribution<int> k(0, 100);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw(36);
    for (auto& v : raw) v = k(rng);
    raw[0] = 0;
    raw[1] = 100;
    const auto map = SimilarityMap::from_scores(raw);
    const PatchGeometry geo(6, 6, 6);
    const auto gt = oracle::random_mask(6, 6, rng);
    EXPECT_EQ(grid_search_threshold(map, geo, gt).best_ciou, breakpoint_oracle(lift_to_pixels(map, geo), gt));
  }
}

TEST(GridSearch, PiecewiseConstantBetweenScores) {
  std::mt19937_64 rng(55);
  const auto map = SimilarityMap::from_scores(oracle::random_scores(16, rng));
  const PatchGeometry geo(4, 4, 4);
  const auto gt = oracle::random_mask(4, 4, rng);
  const auto px = lift_to_pixels(map, geo);
  std::vector<double> cuts(px.begin(), px.end());
  std::sort(cuts.begin(), cuts.end());
  const auto s = grid_search_threshold(map, geo, gt);
  for (std::size_t k = 1; k < s.curve.size(); ++k) {
    const auto [t0, c0] = s.curve[k - 1];
    const auto [t1, c1] = s.curve[k];
    const bool crosses = std::any_of(cuts.begin(), cuts.end(), [&](double v) { return v >= t0 && v < t1; });
    if (!crosses) {
      EXPECT_EQ(c0, c1);
    }
  }
}
