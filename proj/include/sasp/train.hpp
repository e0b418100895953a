#pragma once

// Toy end-to-end loop: mask loss gradients flow through the mock decoder and
// the discrete-to-continuous interpolation back into the image-token
// embeddings, teaching the similarity map where to attend.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sasp/decode.hpp"
#include "sasp/dtoc.hpp"
#include "sasp/embed.hpp"
#include "sasp/error.hpp"
#include "sasp/mask.hpp"
#include "sasp/select.hpp"

namespace sasp {

struct ToyScene {
  Matrix tokens;  // learnable, N_t x d
  std::size_t img_w = 0;
  std::size_t img_h = 0;
  SegEmbedding seg;
  BinaryMask target;
  MockDecoder decoder;
  SelectionConfig selection;
  LossWeights weights;
  double tau = 1.0;
  double stride = 1.0;
};

struct TrainStep {
  std::size_t step = 0;
  double total = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  double in_mask_fraction = 0.0;
  std::vector<Point2> points;

  bool operator==(const TrainStep&) const = default;
};

struct TrainingTrace {
  std::vector<int> labels;
  std::vector<std::size_t> token_index;
  std::vector<TrainStep> steps;
};

/// Fraction of positive points whose nearest pixel lies inside `target` (1 when there are none).
inline double positive_in_mask_fraction(std::span<const Point2> points, std::span<const int> labels,
                                        const BinaryMask& target) {
  std::size_t pos = 0;
  std::size_t inside = 0;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (labels[j] != static_cast<int>(PointLabel::kPositive)) continue;
    ++pos;
    const auto px = static_cast<std::size_t>(
        std::clamp(std::lround(points[j].x), 0L, static_cast<long>(target.width) - 1));
    const auto py = static_cast<std::size_t>(
        std::clamp(std::lround(points[j].y), 0L, static_cast<long>(target.height) - 1));
    inside += target.at(px, py);
  }
  return pos == 0 ? 1.0 : static_cast<double>(inside) / static_cast<double>(pos);
}

/// Plain gradient descent on the token embeddings for `steps` updates.
///
/// Point selection runs once on the initial map and is then frozen; only the
/// interpolated coordinates move. The trace holds steps + 1 entries, entry k
/// measured before update k.
inline TrainingTrace train_toy(const ToyScene& scene, std::size_t steps, double lr) {
  if (!std::isfinite(lr) || lr < 0.0) throw ValueError("train_toy: learning rate must be finite and >= 0");
  if (scene.selection.include_neutral) throw ValueError("train_toy: neutral points cannot reach the decoder");
  if (scene.target.width != scene.img_w || scene.target.height != scene.img_h) {
    throw ShapeError("train_toy: target mask does not match the image");
  }
  Matrix tokens = scene.tokens;
  const auto& h = scene.seg.projected;
  const DtocOptions opt{.tau = scene.tau, .keep_tape = true};

  TrainingTrace trace;
  PointSet frozen;
  std::optional<InterpGrid> grid;

  for (std::size_t step = 0; step <= steps; ++step) {
    const TokenGrid tg(tokens, scene.img_w, scene.img_h);
    const SimilarityMap map = similarity(tg, scene.seg);
    if (step == 0) {
      frozen = select_points(map, tg, scene.selection);
      if (frozen.empty()) throw ValueError("train_toy: the initial similarity map selects no points");
      grid.emplace(tg.geometry(), scene.stride);
      trace.labels = frozen.labels;
      trace.token_index = frozen.token_index;
    }
    const DtocResult pts = dtoc_forward(frozen, map, *grid, opt);
    const SoftMask mask = decode(scene.decoder, pts, scene.seg, scene.img_h, scene.img_w);
    const MaskLoss loss = loss_mask(mask, scene.target, scene.weights);
    if (!std::isfinite(loss.total)) {
      throw NumericError("train_toy: non-finite loss at step " + std::to_string(step));
    }
    trace.steps.push_back(
        {step, loss.total, loss.bce, loss.dice, positive_in_mask_fraction(pts.points, pts.labels, scene.target),
         pts.points});
    if (step == steps || lr == 0.0) continue;

    const auto dv = loss_mask_gradient(mask, scene.target, scene.weights);
    const auto dp = decode_backward(scene.decoder, pts, scene.seg, mask, dv);
    const auto ds = dtoc_backward(pts, dp);
    for (std::size_t t = 0; t < ds.size(); ++t) {
      auto row = tokens.row(t);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] -= lr * ds[t] * h[k];
    }
  }
  return trace;
}

/// Default learning rate for the offset-blob scene.
inline constexpr double kOffsetBlobLearningRate = 10.0;

/// Target disk centred at (19, 19) while the initial similarity peak sits at (12, 12), outside it.
///
/// The peak is narrow over a flat noisy background, so the initial selection
/// holds four positive points and no negatives. Interpolation bandwidth is
/// tau = 2: with tau = 1 the interpolated points can move about one patch
/// from their selected positions, which is not enough to enter the disk.
inline ToyScene make_offset_blob(std::uint64_t seed) {
  constexpr std::size_t kSide = 8;
  constexpr std::size_t kImage = 32;
  constexpr std::size_t kDim = 8;
  const double alpha = static_cast<double>(kImage) / kSide;
  const Point2 peak{12.0, 12.0};
  const Point2 centre{19.0, 19.0};
  const double radius = 7.0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> seg(kDim);
  double norm = 0.0;
  for (auto& v : seg) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : seg) v /= norm;

  ToyScene scene;
  scene.img_w = kImage;
  scene.img_h = kImage;
  scene.seg = SegEmbedding::unprojected(seg);

  // Each token row is random noise with its component along seg replaced so
  // that <row, seg> equals the designed score.
  scene.tokens = Matrix(kSide * kSide, kDim);
  for (std::size_t t = 0; t < kSide * kSide; ++t) {
    const Point2 c{(static_cast<double>(t % kSide) + 0.5) * alpha, (static_cast<double>(t / kSide) + 0.5) * alpha};
    const double d2 = (c.x - peak.x) * (c.x - peak.x) + (c.y - peak.y) * (c.y - peak.y);
    const double score = 3.0 * std::exp(-d2 / 8.0) + 0.02 * normal(rng);
    std::vector<double> row(kDim);
    for (auto& v : row) v = 0.3 * normal(rng);
    const double along = dot(row, seg);
    for (std::size_t k = 0; k < kDim; ++k) scene.tokens(t, k) = row[k] + (score - along) * seg[k];
  }

  scene.target = BinaryMask(kImage, kImage);
  for (std::size_t y = 0; y < kImage; ++y) {
    for (std::size_t x = 0; x < kImage; ++x) {
      const double dx = static_cast<double>(x) - centre.x;
      const double dy = static_cast<double>(y) - centre.y;
      scene.target.at(x, y) = dx * dx + dy * dy <= radius * radius ? 1 : 0;
    }
  }

  scene.decoder.sigma_mask = 3.5;
  scene.decoder.gain = 8.0;
  scene.decoder.bias = -4.0;
  scene.decoder.seg_gate = seg;  // gate = |seg|^2 = 1
  scene.selection.epsilon = 0.5;
  scene.selection.max_points = 4;
  scene.tau = 2.0;
  return scene;
}

}  // namespace sasp
