#pragma once

// Mask IoU metrics and per-image threshold search over a similarity map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sasp/embed.hpp"
#include "sasp/error.hpp"
#include "sasp/mask.hpp"

namespace sasp {

struct IoU {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  double iou = 0.0;

  bool operator==(const IoU&) const = default;
};

/// Pixel IoU. Two empty masks score 1: predicting absence correctly is a hit.
inline IoU iou_pair(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "iou_pair");
  IoU r;
  for (std::size_t k = 0; k < pred.data.size(); ++k) {
    const bool p = pred.data[k] != 0;
    const bool g = gt.data[k] != 0;
    r.intersection += (p && g) ? 1 : 0;
    r.union_ += (p || g) ? 1 : 0;
  }
  r.iou = r.union_ == 0 ? 1.0 : static_cast<double>(r.intersection) / static_cast<double>(r.union_);
  return r;
}

struct IoUReport {
  std::vector<IoU> per_image;
  double giou = 0.0;
  double ciou = 0.0;
};

/// giou = mean per-image IoU, ciou = cumulative intersection / cumulative union.
inline IoUReport aggregate(std::span<const IoU> pairs) {
  if (pairs.empty()) throw ValueError("aggregate: no images");
  IoUReport r;
  r.per_image.assign(pairs.begin(), pairs.end());
  double iou_sum = 0.0;
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  for (const auto& p : pairs) {
    iou_sum += p.iou;
    inter += p.intersection;
    uni += p.union_;
  }
  r.giou = iou_sum / static_cast<double>(pairs.size());
  r.ciou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return r;
}

/// Normalised token scores replicated onto the img_w x img_h pixel lattice (nearest patch).
inline std::vector<double> lift_to_pixels(const SimilarityMap& map, const PatchGeometry& geo) {
  if (map.size() != geo.token_count()) throw ShapeError("lift_to_pixels: map and geometry token counts differ");
  std::vector<double> px(geo.img_w * geo.img_h);
  const auto& s = map.normalized();
  for (std::size_t y = 0; y < geo.img_h; ++y) {
    for (std::size_t x = 0; x < geo.img_w; ++x) {
      px[y * geo.img_w + x] = s[geo.token_at(static_cast<double>(x), static_cast<double>(y))];
    }
  }
  return px;
}

/// 1 where the pixel score is >= t.
inline BinaryMask binarize(std::span<const double> pixel_scores, std::size_t width, std::size_t height, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValueError("binarize: threshold " + std::to_string(t) + " outside [0, 1]");
  if (pixel_scores.size() != width * height) throw ShapeError("binarize: score count does not match lattice");
  BinaryMask m(width, height);
  for (std::size_t k = 0; k < pixel_scores.size(); ++k) m.data[k] = pixel_scores[k] >= t ? 1 : 0;
  return m;
}

inline BinaryMask binarize(const SimilarityMap& map, const PatchGeometry& geo, double t) {
  return binarize(lift_to_pixels(map, geo), geo.img_w, geo.img_h, t);
}

struct ThresholdSweep {
  double step = 0.01;
  double best_t = 0.0;
  double best_ciou = 0.0;
  std::vector<std::pair<double, double>> curve;
};

/// Sweep thresholds 0, step, 2*step, ..., 1.
///
/// When 1/step is an integer K the grid is i/K, so scores that are multiples of
/// 1/K compare exactly; otherwise i*step with 1 appended.
inline std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step <= 0.5)) throw ValueError("threshold step must lie in (0, 0.5]");
  const double inv = 1.0 / step;
  const double k = std::round(inv);
  std::vector<double> ts;
  if (std::abs(k * step - 1.0) < 1e-9) {
    const auto n = static_cast<std::size_t>(k);
    for (std::size_t i = 0; i <= n; ++i) ts.push_back(static_cast<double>(i) / k);
  } else {
    for (std::size_t i = 0; static_cast<double>(i) * step < 1.0; ++i) ts.push_back(static_cast<double>(i) * step);
    ts.push_back(1.0);
  }
  return ts;
}

/// Per-image optimal threshold over pixel scores in [0, 1]; ties go to the smallest t.
inline ThresholdSweep grid_search_threshold(std::span<const double> pixel_scores, const BinaryMask& gt,
                                            double step = 0.01) {
  if (pixel_scores.size() != gt.size()) {
    throw ShapeError("grid_search_threshold: score lattice does not match the ground truth mask");
  }
  ThresholdSweep sweep;
  sweep.step = step;
  sweep.best_ciou = -1.0;
  for (double t : threshold_grid(step)) {
    const double c = iou_pair(binarize(pixel_scores, gt.width, gt.height, t), gt).iou;
    sweep.curve.emplace_back(t, c);
    if (c > sweep.best_ciou) {
      sweep.best_ciou = c;
      sweep.best_t = t;
    }
  }
  return sweep;
}

inline ThresholdSweep grid_search_threshold(const SimilarityMap& map, const PatchGeometry& geo, const BinaryMask& gt,
                                            double step = 0.01) {
  if (gt.width != geo.img_w || gt.height != geo.img_h) {
    throw ShapeError("grid_search_threshold: ground truth does not match the image geometry");
  }
  return grid_search_threshold(lift_to_pixels(map, geo), gt, step);
}

}  // namespace sasp
