#pragma once

// Embedding containers, the seg-token projection MLP and the raw similarity map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sasp/error.hpp"

namespace sasp {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for a " +
                       std::to_string(rows_) + "x" + std::to_string(cols_) + " matrix");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// Integer square root: largest n with n*n <= v.
inline std::size_t isqrt(std::size_t v) {
  auto n = static_cast<std::size_t>(std::sqrt(static_cast<double>(v)));
  while (n * n > v) --n;
  while ((n + 1) * (n + 1) <= v) ++n;
  return n;
}

/// Square patch grid laid over an image of img_w x img_h pixels.
///
/// Token j sits at column j mod side, row j / side. A pixel-space point (x, y)
/// belongs to the patch floor(x / alpha), floor(y / beta), clamped to the grid.
/// This nearest-patch lift is shared by interpolation and mask binarization.
struct PatchGeometry {
  std::size_t side = 1;
  std::size_t img_w = 1;
  std::size_t img_h = 1;

  PatchGeometry() = default;
  PatchGeometry(std::size_t side_, std::size_t img_w_, std::size_t img_h_)
      : side(side_), img_w(img_w_), img_h(img_h_) {
    if (side == 0 || img_w == 0 || img_h == 0) {
      throw ValueError("PatchGeometry: side and image dimensions must be positive");
    }
  }

  std::size_t token_count() const noexcept { return side * side; }
  double alpha() const noexcept { return static_cast<double>(img_w) / static_cast<double>(side); }
  double beta() const noexcept { return static_cast<double>(img_h) / static_cast<double>(side); }

  std::size_t token_at(double x, double y) const noexcept {
    const auto clamp_cell = [this](double v, double extent) {
      const double c = std::floor(v / extent);
      if (c <= 0.0) return std::size_t{0};
      return std::min(static_cast<std::size_t>(c), side - 1);
    };
    return clamp_cell(y, beta()) * side + clamp_cell(x, alpha());
  }

  bool operator==(const PatchGeometry&) const = default;
};

/// N_t image-token embeddings of dimension d plus the image geometry they tile.
class TokenGrid {
 public:
  TokenGrid(Matrix data, std::size_t img_w, std::size_t img_h) : data_(std::move(data)) {
    const std::size_t nt = data_.rows();
    if (nt == 0 || data_.cols() == 0) throw ShapeError("TokenGrid: need N_t >= 1 and d >= 1");
    const std::size_t n = isqrt(nt);
    if (n * n != nt) {
      throw ShapeError("TokenGrid: " + std::to_string(nt) + " tokens do not form a square patch grid (" +
                       std::to_string(nt - n * n) + " beyond " + std::to_string(n) + "x" +
                       std::to_string(n) + ")");
    }
    if (!all_finite(data_.values())) throw ValueError("TokenGrid: non-finite embedding entry");
    geometry_ = PatchGeometry(n, img_w, img_h);
  }

  const Matrix& data() const noexcept { return data_; }
  std::size_t tokens() const noexcept { return data_.rows(); }
  std::size_t dim() const noexcept { return data_.cols(); }
  std::size_t side() const noexcept { return geometry_.side; }
  std::size_t img_w() const noexcept { return geometry_.img_w; }
  std::size_t img_h() const noexcept { return geometry_.img_h; }
  const PatchGeometry& geometry() const noexcept { return geometry_; }

 private:
  Matrix data_;
  PatchGeometry geometry_;
};

enum class Activation { kIdentity, kRelu };

/// y = x * weight + bias, weight stored in_dim x out_dim.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
};

/// Channel chain of the seg-token projection in the reference setup.
inline std::vector<std::size_t> default_projection_dims() { return {512, 4096, 4096}; }

/// Stack of dense layers; `activation` is applied between layers, never after the last.
class MlpProjection {
 public:
  explicit MlpProjection(std::vector<DenseLayer> layers, Activation activation = Activation::kRelu)
      : layers_(std::move(layers)), activation_(activation) {
    if (layers_.empty()) throw ShapeError("MlpProjection: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.in_dim() == 0 || layer.out_dim() == 0) throw ShapeError("MlpProjection: empty layer");
      if (layer.bias.size() != layer.out_dim()) {
        throw ShapeError("MlpProjection: layer " + std::to_string(l) + " bias length mismatch");
      }
      if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim()) {
        throw ShapeError("MlpProjection: layer " + std::to_string(l) + " does not chain (" +
                         std::to_string(layers_[l - 1].out_dim()) + " -> " +
                         std::to_string(layer.in_dim()) + ")");
      }
      if (!all_finite(layer.weight.values()) || !all_finite(layer.bias)) {
        throw ValueError("MlpProjection: non-finite parameter in layer " + std::to_string(l));
      }
    }
  }

  /// Single identity layer of width d, no activation.
  static MlpProjection identity(std::size_t d) {
    Matrix w(d, d);
    for (std::size_t i = 0; i < d; ++i) w(i, i) = 1.0;
    return MlpProjection({DenseLayer{std::move(w), std::vector<double>(d, 0.0)}}, Activation::kIdentity);
  }

  /// Gaussian-initialised chain dims[0] -> dims[1] -> ... (std dev 1/sqrt(fan_in)).
  static MlpProjection random(std::span<const std::size_t> dims, std::uint64_t seed,
                              Activation activation = Activation::kRelu) {
    if (dims.size() < 2) throw ShapeError("MlpProjection::random: need at least two dims");
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dims[l])));
      Matrix w(dims[l], dims[l + 1]);
      for (auto& v : w.values()) v = dist(rng);
      std::vector<double> b(dims[l + 1]);
      for (auto& v : b) v = 0.1 * dist(rng);
      layers.push_back({std::move(w), std::move(b)});
    }
    return MlpProjection(std::move(layers), activation);
  }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t in_dim() const noexcept { return layers_.front().in_dim(); }
  std::size_t out_dim() const noexcept { return layers_.back().out_dim(); }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != in_dim()) {
      throw ShapeError("MlpProjection: input length " + std::to_string(x.size()) + ", expected " +
                       std::to_string(in_dim()));
    }
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      std::vector<double> next(layer.bias);
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        const double xi = cur[i];
        if (xi == 0.0) continue;
        const auto wrow = layer.weight.row(i);
        for (std::size_t o = 0; o < next.size(); ++o) next[o] += xi * wrow[o];
      }
      if (l + 1 < layers_.size() && activation_ == Activation::kRelu) {
        for (auto& v : next) v = std::max(v, 0.0);
      }
      cur = std::move(next);
    }
    return cur;
  }

 private:
  std::vector<DenseLayer> layers_;
  Activation activation_;
};

/// The seg token before (raw) and after (projected) the projection MLP.
struct SegEmbedding {
  std::vector<double> raw;
  std::vector<double> projected;

  /// Seg embedding that needs no projection (raw == projected).
  static SegEmbedding unprojected(std::vector<double> v) {
    if (!all_finite(v)) throw ValueError("SegEmbedding: non-finite entry");
    SegEmbedding s;
    s.raw = v;
    s.projected = std::move(v);
    return s;
  }
};

inline SegEmbedding project_seg(std::span<const double> raw, const MlpProjection& mlp) {
  if (!all_finite(raw)) throw ValueError("project_seg: non-finite raw embedding");
  SegEmbedding s;
  s.raw.assign(raw.begin(), raw.end());
  s.projected = mlp.apply(raw);
  if (!all_finite(s.projected)) throw NumericError("project_seg: projection overflowed");
  return s;
}

/// Softmax with the max subtracted before exponentiation.
inline std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) return {};
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

/// Per-token similarity scores with their min-max normalised form and softmax.
///
/// A constant score vector normalises to 0.5 everywhere, so its stdev is 0.
/// `stdev` is the population standard deviation of the normalised scores.
class SimilarityMap {
 public:
  static SimilarityMap from_scores(std::vector<double> scores) {
    if (scores.empty()) throw ShapeError("SimilarityMap: no scores");
    if (!all_finite(scores)) throw ValueError("SimilarityMap: non-finite score");
    SimilarityMap m;
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double min = *lo;
    const double range = *hi - *lo;
    m.normalized_.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      m.normalized_[i] = range > 0.0 ? (scores[i] - min) / range : 0.5;
    }
    const double n = static_cast<double>(scores.size());
    double sum = 0.0;
    for (double v : m.normalized_) sum += v;
    m.mean_ = sum / n;
    double ss = 0.0;
    for (double v : m.normalized_) ss += (v - m.mean_) * (v - m.mean_);
    m.stdev_ = std::sqrt(ss / n);
    m.probs_ = softmax(scores);
    m.scores_ = std::move(scores);
    return m;
  }

  std::size_t size() const noexcept { return scores_.size(); }
  const std::vector<double>& scores() const noexcept { return scores_; }
  const std::vector<double>& normalized() const noexcept { return normalized_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double mean() const noexcept { return mean_; }
  double stdev() const noexcept { return stdev_; }

 private:
  SimilarityMap() = default;

  std::vector<double> scores_;
  std::vector<double> normalized_;
  std::vector<double> probs_;
  double mean_ = 0.0;
  double stdev_ = 0.0;
};

/// scores_i = <token_i, seg.projected>.
inline std::vector<double> similarity_scores(const TokenGrid& grid, std::span<const double> seg) {
  if (grid.dim() != seg.size()) {
    throw ShapeError("similarity: token dim " + std::to_string(grid.dim()) + " vs seg dim " +
                     std::to_string(seg.size()));
  }
  if (!all_finite(seg)) throw ValueError("similarity: non-finite seg embedding");
  std::vector<double> s(grid.tokens());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = dot(grid.data().row(i), seg);
  return s;
}

inline SimilarityMap similarity(const TokenGrid& grid, const SegEmbedding& seg) {
  return SimilarityMap::from_scores(similarity_scores(grid, seg.projected));
}

}  // namespace sasp
