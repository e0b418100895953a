#pragma once

// Mock point-conditioned mask decoder and the segmentation/text losses.
//
// The decoder splats an isotropic Gaussian per prompt point into a logit map,
// signed by the point label and scaled by a gate read off the seg embedding:
//   logit(x, y) = bias + <seg_gate, h_seg> * gain * sum_j s_j exp(-|(x,y) - p_j|^2 / (2 sigma^2))
// with s_j = +1 for positive and -1 for negative points.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sasp/dtoc.hpp"
#include "sasp/embed.hpp"
#include "sasp/error.hpp"
#include "sasp/mask.hpp"
#include "sasp/select.hpp"

namespace sasp {

struct MockDecoder {
  double sigma_mask = 3.0;
  double gain = 1.0;
  double bias = 0.0;
  std::vector<double> seg_gate;

  void validate() const {
    if (!(sigma_mask > 0.0) || !std::isfinite(sigma_mask)) throw ValueError("MockDecoder: sigma_mask must be > 0");
    if (!std::isfinite(gain) || !std::isfinite(bias) || !all_finite(seg_gate)) {
      throw ValueError("MockDecoder: non-finite parameter");
    }
  }

  double gate(const SegEmbedding& seg) const { return dot(seg_gate, seg.projected); }
};

/// Sigmoid output of the decoder, values kept strictly inside (0, 1).
struct SoftMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
  double threshold = 0.5;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

  BinaryMask binary() const {
    BinaryMask m(width, height);
    for (std::size_t i = 0; i < values.size(); ++i) m.data[i] = values[i] >= threshold ? 1 : 0;
    return m;
  }
};

inline constexpr double kProbabilityFloor = 1e-12;

inline double sigmoid(double z) {
  const double v = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(v, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

namespace detail {

inline double label_sign(int label) {
  if (label == static_cast<int>(PointLabel::kPositive)) return 1.0;
  if (label == static_cast<int>(PointLabel::kNegative)) return -1.0;
  throw ValueError("decode: neutral points cannot be fed to the decoder");
}

}  // namespace detail

/// Decodes an out_w x out_h mask. Pixel (x, y) sits at origin + (x, y).
inline SoftMask decode(const MockDecoder& dec, std::span<const Point2> points, std::span<const int> labels,
                       const SegEmbedding& seg, std::size_t out_h, std::size_t out_w, Point2 origin = {}) {
  dec.validate();
  if (points.empty()) throw ValueError("decode: empty point set");
  if (labels.size() != points.size()) throw ShapeError("decode: labels and points differ in length");
  if (out_h == 0 || out_w == 0) throw ShapeError("decode: empty output lattice");
  std::vector<double> sign(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) sign[j] = detail::label_sign(labels[j]);

  const double amp = dec.gate(seg) * dec.gain;
  const double inv2s2 = 1.0 / (2.0 * dec.sigma_mask * dec.sigma_mask);
  SoftMask out{out_w, out_h, std::vector<double>(out_w * out_h), 0.5};
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const double px = origin.x + static_cast<double>(x);
      const double py = origin.y + static_cast<double>(y);
      double splat = 0.0;
      for (std::size_t j = 0; j < points.size(); ++j) {
        const double dx = px - points[j].x;
        const double dy = py - points[j].y;
        splat += sign[j] * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
      out.values[y * out_w + x] = sigmoid(dec.bias + amp * splat);
    }
  }
  return out;
}

inline SoftMask decode(const MockDecoder& dec, const DtocResult& pts, const SegEmbedding& seg, std::size_t out_h,
                       std::size_t out_w, Point2 origin = {}) {
  return decode(dec, pts.points, pts.labels, seg, out_h, out_w, origin);
}

/// Chains dL/d(mask values) back to dL/d(point coordinates).
inline std::vector<Point2> decode_backward(const MockDecoder& dec, std::span<const Point2> points,
                                           std::span<const int> labels, const SegEmbedding& seg,
                                           const SoftMask& mask, std::span<const double> grad_values,
                                           Point2 origin = {}) {
  if (grad_values.size() != mask.values.size()) throw ShapeError("decode_backward: gradient size mismatch");
  if (labels.size() != points.size()) throw ShapeError("decode_backward: labels and points differ in length");
  const double amp = dec.gate(seg) * dec.gain;
  const double inv_s2 = 1.0 / (dec.sigma_mask * dec.sigma_mask);
  const double inv2s2 = 0.5 * inv_s2;
  std::vector<Point2> grad(points.size());
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      const std::size_t k = y * mask.width + x;
      const double v = mask.values[k];
      const double dlogit = grad_values[k] * v * (1.0 - v);
      if (dlogit == 0.0) continue;
      const double px = origin.x + static_cast<double>(x);
      const double py = origin.y + static_cast<double>(y);
      for (std::size_t j = 0; j < points.size(); ++j) {
        const double dx = px - points[j].x;
        const double dy = py - points[j].y;
        const double kern = detail::label_sign(labels[j]) * std::exp(-(dx * dx + dy * dy) * inv2s2);
        const double c = dlogit * amp * kern * inv_s2;
        grad[j].x += c * dx;
        grad[j].y += c * dy;
      }
    }
  }
  return grad;
}

inline std::vector<Point2> decode_backward(const MockDecoder& dec, const DtocResult& pts, const SegEmbedding& seg,
                                           const SoftMask& mask, std::span<const double> grad_values,
                                           Point2 origin = {}) {
  return decode_backward(dec, pts.points, pts.labels, seg, mask, grad_values, origin);
}

struct LossWeights {
  double text = 1.0;
  double mask = 1.0;
  double bce = 2.0;
  double dice = 0.5;

  void validate() const {
    for (double v : {text, mask, bce, dice}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
    }
  }
};

inline constexpr double kDiceSmoothing = 1.0;

struct MaskLoss {
  double total = 0.0;
  double bce = 0.0;
  double dice = 0.0;
};

namespace detail {

inline void check_loss_inputs(const SoftMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.values.size() != gt.data.size()) {
    throw ShapeError("loss_mask: prediction and ground truth shapes differ");
  }
  for (auto g : gt.data) {
    if (g > 1) throw ValueError("loss_mask: ground truth values must be 0 or 1");
  }
}

inline double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

}  // namespace detail

/// total = bce_weight * bce + dice_weight * dice.
inline MaskLoss loss_mask(const SoftMask& pred, const BinaryMask& gt, const LossWeights& w = {}) {
  detail::check_loss_inputs(pred, gt);
  w.validate();
  double bce = 0.0;
  double inter = 0.0;
  double psum = 0.0;
  double gsum = 0.0;
  for (std::size_t k = 0; k < pred.values.size(); ++k) {
    const double v = pred.values[k];
    const double g = gt.data[k];
    bce -= g * detail::safe_log(v) + (1.0 - g) * detail::safe_log(1.0 - v);
    inter += v * g;
    psum += v;
    gsum += g;
  }
  MaskLoss out;
  out.bce = bce / static_cast<double>(pred.values.size());
  out.dice = 1.0 - (2.0 * inter + kDiceSmoothing) / (psum + gsum + kDiceSmoothing);
  out.total = w.bce * out.bce + w.dice * out.dice;
  return out;
}

/// d(total)/d(pred value) per pixel.
inline std::vector<double> loss_mask_gradient(const SoftMask& pred, const BinaryMask& gt, const LossWeights& w = {}) {
  detail::check_loss_inputs(pred, gt);
  w.validate();
  double inter = 0.0;
  double psum = 0.0;
  double gsum = 0.0;
  for (std::size_t k = 0; k < pred.values.size(); ++k) {
    inter += pred.values[k] * gt.data[k];
    psum += pred.values[k];
    gsum += gt.data[k];
  }
  const double num = 2.0 * inter + kDiceSmoothing;
  const double den = psum + gsum + kDiceSmoothing;
  const double n = static_cast<double>(pred.values.size());
  std::vector<double> grad(pred.values.size());
  for (std::size_t k = 0; k < grad.size(); ++k) {
    const double v = pred.values[k];
    const double g = gt.data[k];
    const double dbce = (-g / v + (1.0 - g) / (1.0 - v)) / n;
    const double ddice = -(2.0 * g * den - num) / (den * den);
    grad[k] = w.bce * dbce + w.dice * ddice;
  }
  return grad;
}

/// Mean token cross-entropy of T x V logits against target ids.
inline double loss_text(const Matrix& logits, std::span<const std::size_t> targets) {
  if (logits.rows() != targets.size()) throw ShapeError("loss_text: one target per logit row required");
  if (targets.empty()) throw ShapeError("loss_text: no positions");
  if (!all_finite(logits.values())) throw ValueError("loss_text: non-finite logit");
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] >= logits.cols()) {
      throw IndexError("loss_text: target id " + std::to_string(targets[t]) + " out of vocabulary of " +
                       std::to_string(logits.cols()));
    }
    const auto row = logits.row(t);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - m);
    total += (m + std::log(z)) - row[targets[t]];
  }
  return total / static_cast<double>(targets.size());
}

/// text_weight * text_loss + mask_weight * mask_loss.
inline double combined_objective(double text_loss, const MaskLoss& mask_loss, const LossWeights& w = {}) {
  w.validate();
  return w.text * text_loss + w.mask * mask_loss.total;
}

}  // namespace sasp
