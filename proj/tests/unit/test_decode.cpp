#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sasp/decode.hpp"
#include "sasp/train.hpp"

using namespace sasp;

namespace {

MockDecoder unit_decoder(double sigma = 2.0, double gain = 3.0, double bias = -1.0) {
  MockDecoder d;
  d.sigma_mask = sigma;
  d.gain = gain;
  d.bias = bias;
  d.seg_gate = {1.0, 0.0};
  return d;
}

const SegEmbedding kSeg = SegEmbedding::unprojected({1.0, 0.5});

SoftMask constant_mask(std::size_t w, std::size_t h, double v) { return {w, h, std::vector<double>(w * h, v), 0.5}; }

}  // namespace

TEST(Decode, SinglePositivePeaksUnderPoint) {
  const std::vector<Point2> pts{{5, 5}};
  const std::vector<int> labels{1};
  const auto m = decode(unit_decoder(2.0, 5.0, -6.0), pts, labels, kSeg, 11, 11);
  const auto it = std::max_element(m.values.begin(), m.values.end());
  EXPECT_EQ(it - m.values.begin(), 5 * 11 + 5);
}

TEST(Decode, MirroredPointsGiveMirroredMask) {
  const std::size_t w = 9;
  const std::vector<Point2> pts{{1.25, 2.5}, {6.0, 4.75}};
  const std::vector<int> labels{1, 0};
  std::vector<Point2> mirrored;
  for (auto p : pts) mirrored.push_back({static_cast<double>(w) - 1 - p.x, p.y});
  const auto a = decode(unit_decoder(), pts, labels, kSeg, 7, w);
  const auto b = decode(unit_decoder(), mirrored, labels, kSeg, 7, w);
  for (std::size_t y = 0; y < 7; ++y) {
    for (std::size_t x = 0; x < w; ++x) EXPECT_NEAR(a.at(x, y), b.at(w - 1 - x, y), 1e-12);
  }
}

TEST(Decode, CoincidentOppositePointsCancel) {
  const std::vector<Point2> pts{{3, 2}, {3, 2}};
  const std::vector<int> labels{1, 0};
  const auto m = decode(unit_decoder(1.5, 4.0, -0.7), pts, labels, kSeg, 5, 6);
  for (double v : m.values) EXPECT_EQ(v, sigmoid(-0.7));
}

TEST(Decode, TranslationEquivariant) {
  const std::vector<Point2> pts{{2.25, 3.5}, {4.0, 1.0}};
  const std::vector<Point2> shifted{{5.25, 1.5}, {7.0, -1.0}};
  const std::vector<int> labels{1, 0};
  const auto a = decode(unit_decoder(), pts, labels, kSeg, 6, 6);
  const auto b = decode(unit_decoder(), shifted, labels, kSeg, 6, 6, {3.0, -2.0});
  for (std::size_t k = 0; k < a.values.size(); ++k) EXPECT_NEAR(a.values[k], b.values[k], 1e-14);
}

TEST(Decode, RejectsNeutralAndEmpty) {
  const std::vector<Point2> pts{{1, 1}};
  const std::vector<int> neutral{-1};
  EXPECT_THROW(decode(unit_decoder(), pts, neutral, kSeg, 4, 4), ValueError);
  EXPECT_THROW(decode(unit_decoder(), std::vector<Point2>{}, std::vector<int>{}, kSeg, 4, 4), ValueError);
  auto bad = unit_decoder();
  bad.sigma_mask = 0.0;
  const std::vector<int> pos{1};
  EXPECT_THROW(decode(bad, pts, pos, kSeg, 4, 4), ValueError);
}

TEST(Decode, ValuesStrictlyInsideUnitInterval) {
  const std::vector<Point2> pts{{1, 1}};
  const std::vector<int> labels{1};
  const auto m = decode(unit_decoder(1.0, 1e4, -50.0), pts, labels, kSeg, 4, 4);
  for (double v : m.values) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(LossMask, HalfPredictionAllOnes) {
  const auto l = loss_mask(constant_mask(2, 2, 0.5), BinaryMask(2, 2, 1));
  EXPECT_NEAR(l.bce, std::log(2.0), 1e-15);
  EXPECT_NEAR(l.dice, 2.0 / 7.0, 1e-15);
  EXPECT_EQ(l.total, 2.0 * l.bce + 0.5 * l.dice);
}

TEST(LossMask, PerfectPrediction) {
  std::mt19937_64 rng(41);
  const auto gt = oracle::random_mask(6, 5, rng);
  SoftMask p{6, 5, std::vector<double>(30), 0.5};
  for (std::size_t k = 0; k < 30; ++k) p.values[k] = gt.data[k] ? 1 - 1e-7 : 1e-7;
  const auto l = loss_mask(p, gt);
  EXPECT_NEAR(l.bce, 0.0, 1e-6);
  EXPECT_NEAR(l.dice, 0.0, 1e-6);
}

TEST(LossMask, EmptyGroundTruthSmoothing) {
  const auto l = loss_mask(constant_mask(4, 4, 1e-9), BinaryMask(4, 4, 0));
  EXPECT_NEAR(l.dice, 0.0, 1e-7);
}

TEST(LossMask, RejectsShapeMismatch) {
  EXPECT_THROW(loss_mask(constant_mask(2, 2, 0.5), BinaryMask(2, 3, 1)), ShapeError);
}

TEST(LossMask, MatchesDefinitionAndDecomposes) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::uniform_real_distribution<double> lam(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = oracle::random_mask(5, 4, rng, 0.3);
    SoftMask p{5, 4, std::vector<double>(20), 0.5};
    for (auto& v : p.values) v = u(rng);
    LossWeights w;
    w.bce = lam(rng);
    w.dice = lam(rng);
    const auto l = loss_mask(p, gt, w);
    EXPECT_NEAR(l.bce, oracle::bce(p.values, gt), 1e-12);
    EXPECT_NEAR(l.dice, oracle::dice(p.values, gt), 1e-12);
    EXPECT_EQ(l.total, w.bce * l.bce + w.dice * l.dice);
    EXPECT_GE(l.bce, 0.0);
    EXPECT_GE(l.dice, 0.0);
    EXPECT_LE(l.dice, 1.0);
  }
}

TEST(LossMask, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const auto gt = oracle::random_mask(4, 4, rng);
  SoftMask p{4, 4, std::vector<double>(16), 0.5};
  for (auto& v : p.values) v = u(rng);
  const auto g = loss_mask_gradient(p, gt);
  const auto fd = oracle::central_difference(p.values, 1e-6, [&](const std::vector<double>& v) {
    return loss_mask(SoftMask{4, 4, v, 0.5}, gt).total;
  });
  for (std::size_t k = 0; k < 16; ++k) EXPECT_LT(oracle::rel_error(g[k], fd[k]), 1e-6);
}

TEST(LossText, UniformLogits) {
  const Matrix logits(3, 4, 0.25);
  const std::vector<std::size_t> tgt{0, 3, 1};
  EXPECT_NEAR(loss_text(logits, tgt), std::log(4.0), 1e-15);
}

TEST(LossText, TwoByTwo) {
  const Matrix logits(2, 2, {1, 0, 0, 1});
  const std::vector<std::size_t> tgt{0, 1};
  EXPECT_NEAR(loss_text(logits, tgt), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(loss_text(logits, tgt), 0.3133, 5e-5);
}

TEST(LossText, LargeMarginApproachesZero) {
  const Matrix logits(1, 3, {500, 0, 0});
  const std::vector<std::size_t> tgt{0};
  EXPECT_LT(loss_text(logits, tgt), 1e-200);
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(loss_text(logits, bad), IndexError);
}

TEST(CombinedObjective, WeightsTextAndMask) {
  MaskLoss m{1.5, 0.5, 1.0};
  LossWeights w;
  w.text = 0.25;
  w.mask = 2.0;
  EXPECT_EQ(combined_objective(0.8, m, w), 0.25 * 0.8 + 2.0 * 1.5);
}

TEST(DecodeBackward, ThroughInterpolationMatchesCentralDifferences) {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<std::size_t> side(1, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = side(rng);
    const PatchGeometry geo(n, 8, 8);
    const InterpGrid grid(geo);
    auto s = oracle::random_scores(n * n, rng);
    const auto ps = select_points(SimilarityMap::from_scores(s), geo, {});
    if (ps.empty()) continue;
    const auto gt = oracle::random_mask(8, 8, rng);
    const auto dec = unit_decoder(2.0, 2.5, -0.5);
    const auto loss_of = [&](const std::vector<double>& sc) {
      const auto r = dtoc_forward(ps, SimilarityMap::from_scores(sc), grid, {.keep_tape = false});
      return loss_mask(decode(dec, r, kSeg, 8, 8), gt).total;
    };
    const auto res = dtoc_forward(ps, SimilarityMap::from_scores(s), grid);
    const auto mask = decode(dec, res, kSeg, 8, 8);
    const auto dp = decode_backward(dec, res, kSeg, mask, loss_mask_gradient(mask, gt));
    const auto g = dtoc_backward(res, dp);
    const auto fd = oracle::central_difference(s, 1e-5, loss_of);
    for (std::size_t t = 0; t < g.size(); ++t) worst = std::max(worst, oracle::rel_error(g[t], fd[t]));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(TrainToy, ZeroLearningRateIsConstant) {
  const auto tr = train_toy(make_offset_blob(3), 5, 0.0);
  ASSERT_EQ(tr.steps.size(), 6u);
  for (const auto& s : tr.steps) {
    EXPECT_EQ(s.total, tr.steps[0].total);
    EXPECT_EQ(s.points, tr.steps[0].points);
  }
}

TEST(TrainToy, WholeImageTargetIsAlwaysHit) {
  auto scene = make_offset_blob(4);
  scene.target = BinaryMask(scene.img_w, scene.img_h, 1);
  for (const auto& s : train_toy(scene, 20, kOffsetBlobLearningRate).steps) EXPECT_EQ(s.in_mask_fraction, 1.0);
}

TEST(TrainToy, PeakStartsOutsideTheDisk) {
  const auto tr = train_toy(make_offset_blob(0), 0, kOffsetBlobLearningRate);
  EXPECT_EQ(tr.steps.size(), 1u);
  EXPECT_EQ(tr.steps[0].in_mask_fraction, 0.0);
  for (int l : tr.labels) EXPECT_EQ(l, 1);
}

TEST(TrainToy, LossDropsAndDeterministic) {
  const auto a = train_toy(make_offset_blob(5), 60, kOffsetBlobLearningRate);
  const auto b = train_toy(make_offset_blob(5), 60, kOffsetBlobLearningRate);
  EXPECT_LT(a.steps.back().total, a.steps.front().total);
  EXPECT_EQ(a.steps, b.steps);
}
