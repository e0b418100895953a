#pragma once

// Discrete-to-continuous point interpolation.
//
// Each selected point (x_j, y_j) is replaced by a weighted average of grid
// coordinates, with weights exp(-d_i / tau) * p(i) normalised over the grid,
// where d_i is the pixel distance from grid point i to the selected point and
// p(i) is the softmax probability of the token whose patch contains grid
// point i. The result is differentiable in the similarity scores.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sasp/embed.hpp"
#include "sasp/error.hpp"
#include "sasp/select.hpp"

namespace sasp {

/// Lattice of interpolation points over [0, img_w-1] x [0, img_h-1].
///
/// Axis coordinates are 0, stride, 2*stride, ... with the far edge appended
/// when the stride does not land on it. Stride 1 is the full pixel grid.
class InterpGrid {
 public:
  explicit InterpGrid(const PatchGeometry& geo, double stride = 1.0) : geometry_(geo), stride_(stride) {
    if (!(stride >= 1.0) || !std::isfinite(stride)) {
      throw ValueError("InterpGrid: stride must be >= 1, got " + std::to_string(stride));
    }
    const auto xs = axis(geo.img_w, stride);
    const auto ys = axis(geo.img_h, stride);
    cols_ = xs.size();
    rows_ = ys.size();
    gx_.reserve(cols_ * rows_);
    gy_.reserve(cols_ * rows_);
    token_.reserve(cols_ * rows_);
    for (double y : ys) {
      for (double x : xs) {
        gx_.push_back(x);
        gy_.push_back(y);
        token_.push_back(geo.token_at(x, y));
      }
    }
  }

  std::size_t size() const noexcept { return gx_.size(); }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t rows() const noexcept { return rows_; }
  double stride() const noexcept { return stride_; }
  const PatchGeometry& geometry() const noexcept { return geometry_; }

  /// Row-major grid point coordinates and the token each one inherits its probability from.
  std::span<const double> gx() const noexcept { return gx_; }
  std::span<const double> gy() const noexcept { return gy_; }
  std::span<const std::size_t> token_of() const noexcept { return token_; }

 private:
  static std::vector<double> axis(std::size_t extent, double stride) {
    const double last = static_cast<double>(extent) - 1.0;
    std::vector<double> a;
    for (std::size_t k = 0;; ++k) {
      const double v = static_cast<double>(k) * stride;
      if (v > last + 1e-9) break;
      a.push_back(std::min(v, last));
    }
    if (last - a.back() > 1e-9) a.push_back(last);
    return a;
  }

  PatchGeometry geometry_;
  double stride_;
  std::size_t cols_ = 0;
  std::size_t rows_ = 0;
  std::vector<double> gx_;
  std::vector<double> gy_;
  std::vector<std::size_t> token_;
};

struct DtocOptions {
  /// Distance bandwidth: weights are exp(-d / tau). tau = 1 is the plain exp(-d).
  double tau = 1.0;
  /// Keep the normalised weights so dtoc_backward can run.
  bool keep_tape = true;
};

/// State recorded by the forward pass for the backward pass.
struct GradTape {
  std::shared_ptr<const InterpGrid> grid;
  std::size_t tokens = 0;
  /// points x grid normalised weights, row-major.
  std::vector<double> weights;
  std::vector<Point2> outputs;

  std::span<const double> weights_for(std::size_t j) const {
    return std::span<const double>(weights).subspan(j * grid->size(), grid->size());
  }
};

struct DtocResult {
  std::vector<Point2> points;
  std::vector<int> labels;
  std::vector<std::size_t> token_index;
  std::shared_ptr<const GradTape> tape;

  std::size_t size() const noexcept { return points.size(); }
};

/// Tolerance on sum(w_hat) - 1 enforced after every forward pass.
inline constexpr double kWeightSumTolerance = 1e-9;

inline DtocResult dtoc_forward(const PointSet& pts, const SimilarityMap& map, const InterpGrid& grid,
                               const DtocOptions& opt = {}) {
  const PatchGeometry& geo = grid.geometry();
  if (grid.size() == 0) throw ValueError("dtoc_forward: empty interpolation grid");
  if (map.size() != geo.token_count()) {
    throw ShapeError("dtoc_forward: map has " + std::to_string(map.size()) + " tokens, geometry has " +
                     std::to_string(geo.token_count()));
  }
  if (!(opt.tau > 0.0) || !std::isfinite(opt.tau)) throw ValueError("dtoc_forward: tau must be > 0");
  pts.validate(geo);

  // p = softmax(S) has a partition function shared by every grid point, so it
  // cancels in the normalisation; log w~_i = -d_i/tau + S_token(i) + const.
  const auto& scores = map.scores();
  const double smax = *std::max_element(scores.begin(), scores.end());
  const auto gx = grid.gx();
  const auto gy = grid.gy();
  const auto tok = grid.token_of();
  const std::size_t g = grid.size();
  const double xmax = static_cast<double>(geo.img_w) - 1.0;
  const double ymax = static_cast<double>(geo.img_h) - 1.0;

  DtocResult res;
  res.labels = pts.labels;
  res.token_index = pts.token_index;
  res.points.reserve(pts.size());
  std::vector<double> all_weights;
  if (opt.keep_tape) all_weights.resize(pts.size() * g);
  std::vector<double> w(g);

  for (std::size_t j = 0; j < pts.size(); ++j) {
    const Point2 c = pts.points[j];
    double amax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g; ++i) {
      const double d = std::hypot(gx[i] - c.x, gy[i] - c.y);
      w[i] = -d / opt.tau + (scores[tok[i]] - smax);
      amax = std::max(amax, w[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      w[i] = std::exp(w[i] - amax);
      z += w[i];
    }
    double sum = 0.0;
    double x = 0.0;
    double y = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      w[i] /= z;
      sum += w[i];
      x += gx[i] * w[i];
      y += gy[i] * w[i];
    }
    if (!(std::abs(sum - 1.0) <= kWeightSumTolerance) || !std::isfinite(x) || !std::isfinite(y)) {
      throw NumericError("dtoc_forward: weights for point " + std::to_string(j) + " do not normalise");
    }
    // Rounding can push a convex combination an ulp past the hull.
    res.points.push_back({std::clamp(x, 0.0, xmax), std::clamp(y, 0.0, ymax)});
    if (opt.keep_tape) std::copy(w.begin(), w.end(), all_weights.begin() + static_cast<std::ptrdiff_t>(j * g));
  }

  if (opt.keep_tape) {
    auto tape = std::make_shared<GradTape>();
    tape->grid = std::make_shared<const InterpGrid>(grid);
    tape->tokens = map.size();
    tape->weights = std::move(all_weights);
    tape->outputs = res.points;
    res.tape = std::move(tape);
  }
  return res;
}

/// dL/dS for every token given dL/d(x_hat_j, y_hat_j) per point.
///
/// dx_hat_j/dS_t = sum over grid points i in patch t of w_hat_i (g_x,i - x_hat_j);
/// the selected integer coordinates themselves receive no gradient.
inline std::vector<double> dtoc_backward(const DtocResult& res, std::span<const Point2> upstream) {
  if (!res.tape) throw ValueError("dtoc_backward: result was produced without a gradient tape");
  const GradTape& tape = *res.tape;
  if (upstream.size() != tape.outputs.size()) {
    throw ShapeError("dtoc_backward: " + std::to_string(upstream.size()) + " upstream gradients for " +
                     std::to_string(tape.outputs.size()) + " points");
  }
  const auto gx = tape.grid->gx();
  const auto gy = tape.grid->gy();
  const auto tok = tape.grid->token_of();
  std::vector<double> grad(tape.tokens, 0.0);
  for (std::size_t j = 0; j < upstream.size(); ++j) {
    const auto w = tape.weights_for(j);
    const Point2 out = tape.outputs[j];
    const Point2 u = upstream[j];
    for (std::size_t i = 0; i < w.size(); ++i) {
      grad[tok[i]] += w[i] * (u.x * (gx[i] - out.x) + u.y * (gy[i] - out.y));
    }
  }
  return grad;
}

struct ConvergenceEntry {
  double stride = 1.0;
  std::vector<Point2> coords;
};

/// Runs dtoc_forward at each stride (descending, all >= 1).
inline std::vector<ConvergenceEntry> dtoc_convergence(const PointSet& pts, const SimilarityMap& map,
                                                      const PatchGeometry& geo, std::span<const double> strides,
                                                      double tau = 1.0) {
  if (strides.empty()) throw ValueError("dtoc_convergence: no strides");
  for (std::size_t k = 0; k < strides.size(); ++k) {
    if (!(strides[k] >= 1.0)) throw ValueError("dtoc_convergence: stride " + std::to_string(strides[k]) + " < 1");
    if (k > 0 && !(strides[k] < strides[k - 1])) {
      throw ValueError("dtoc_convergence: strides must be strictly descending");
    }
  }
  std::vector<ConvergenceEntry> out;
  for (double s : strides) {
    auto r = dtoc_forward(pts, map, InterpGrid(geo, s), {.tau = tau, .keep_tape = false});
    out.push_back({s, std::move(r.points)});
  }
  return out;
}

}  // namespace sasp
