#pragma once

// Threshold-based point selection over a similarity map and patch-index to
// pixel-coordinate restoration.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "sasp/embed.hpp"
#include "sasp/error.hpp"

namespace sasp {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

enum class PointLabel : int { kNeutral = -1, kNegative = 0, kPositive = 1 };

struct SelectionConfig {
  double epsilon = 0.5;
  /// Per-class cap on selected points; unset means unlimited.
  std::optional<std::size_t> max_points;
  bool include_neutral = false;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be a finite value > 0");
    if (max_points && *max_points < 1) throw ConfigError("max_points must be >= 1");
  }
};

struct Thresholds {
  double positive = 0.0;
  double negative = 0.0;

  bool operator==(const Thresholds&) const = default;
};

inline Thresholds thresholds(double mean, double stdev, double epsilon) {
  return {mean + stdev * epsilon, mean - stdev * epsilon};
}

inline Thresholds thresholds(const SimilarityMap& map, const SelectionConfig& cfg) {
  cfg.validate();
  return thresholds(map.mean(), map.stdev(), cfg.epsilon);
}

/// Token indices split into three disjoint classes, each ascending.
struct IndexSets {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
  std::vector<std::size_t> neutral;

  bool operator==(const IndexSets&) const = default;
};

namespace detail {

// Keep the `cap` best entries under `better`, ties to the lower index, then restore index order.
template <typename Better>
void keep_extremes(std::vector<std::size_t>& idx, std::size_t cap, Better better) {
  if (idx.size() <= cap) return;
  std::stable_sort(idx.begin(), idx.end(), better);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
}

}  // namespace detail

/// Classification against explicit thresholds. With stdev == 0 every token is neutral.
inline IndexSets select_indices(const SimilarityMap& map, const Thresholds& t, const SelectionConfig& cfg) {
  cfg.validate();
  const auto& s = map.normalized();
  IndexSets sets;
  const bool degenerate = map.stdev() == 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!degenerate && s[j] >= t.positive) {
      sets.positive.push_back(j);
    } else if (!degenerate && s[j] <= t.negative) {
      sets.negative.push_back(j);
    } else {
      sets.neutral.push_back(j);
    }
  }
  if (cfg.max_points) {
    // Tokens dropped by the cap are no longer confident either way.
    const auto cap_class = [&](std::vector<std::size_t>& cls, auto better) {
      const auto all = cls;
      detail::keep_extremes(cls, *cfg.max_points, better);
      std::set_difference(all.begin(), all.end(), cls.begin(), cls.end(), std::back_inserter(sets.neutral));
    };
    cap_class(sets.positive, [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    cap_class(sets.negative, [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    std::sort(sets.neutral.begin(), sets.neutral.end());
  }
  return sets;
}

inline IndexSets select_indices(const SimilarityMap& map, const SelectionConfig& cfg) {
  return select_indices(map, thresholds(map, cfg), cfg);
}

/// Pixel coordinates of the centre of patch j, clamped to the image.
inline Point2 restore_coordinates(std::size_t j, const PatchGeometry& geo) {
  const std::size_t n = geo.side;
  if (j >= n * n) {
    throw IndexError("restore_coordinates: token " + std::to_string(j) + " outside " + std::to_string(n) +
                     "x" + std::to_string(n) + " patch grid");
  }
  const double col = static_cast<double>(j % n);
  const double row = static_cast<double>(j / n);
  return {std::min((col + 0.5) * geo.alpha(), static_cast<double>(geo.img_w) - 1.0),
          std::min((row + 0.5) * geo.beta(), static_cast<double>(geo.img_h) - 1.0)};
}

inline Point2 restore_coordinates(std::size_t j, const TokenGrid& grid) {
  return restore_coordinates(j, grid.geometry());
}

/// Selected prompt points: positives, then negatives, then neutrals, ascending token index in each.
struct PointSet {
  std::vector<Point2> points;
  std::vector<int> labels;
  std::vector<std::size_t> token_index;
  Thresholds thresholds;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  void validate(const PatchGeometry& geo) const {
    if (labels.size() != points.size() || token_index.size() != points.size()) {
      throw ShapeError("PointSet: points/labels/token_index lengths differ");
    }
    const double xmax = static_cast<double>(geo.img_w) - 1.0;
    const double ymax = static_cast<double>(geo.img_h) - 1.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto& p = points[k];
      if (!(p.x >= 0.0 && p.x <= xmax && p.y >= 0.0 && p.y <= ymax)) {
        throw ValueError("PointSet: point " + std::to_string(k) + " outside the image");
      }
      if (labels[k] < -1 || labels[k] > 1) throw ValueError("PointSet: bad label");
      if (token_index[k] >= geo.token_count()) throw IndexError("PointSet: token index out of range");
    }
  }

  bool operator==(const PointSet&) const = default;
};

inline PointSet select_points(const SimilarityMap& map, const PatchGeometry& geo, const SelectionConfig& cfg) {
  if (map.size() != geo.token_count()) {
    throw ShapeError("select_points: map has " + std::to_string(map.size()) + " tokens, grid has " +
                     std::to_string(geo.token_count()));
  }
  PointSet out;
  out.thresholds = thresholds(map, cfg);
  const IndexSets sets = select_indices(map, out.thresholds, cfg);
  const auto emit = [&](const std::vector<std::size_t>& idx, PointLabel label) {
    for (std::size_t j : idx) {
      out.points.push_back(restore_coordinates(j, geo));
      out.labels.push_back(static_cast<int>(label));
      out.token_index.push_back(j);
    }
  };
  emit(sets.positive, PointLabel::kPositive);
  emit(sets.negative, PointLabel::kNegative);
  if (cfg.include_neutral) emit(sets.neutral, PointLabel::kNeutral);
  return out;
}

inline PointSet select_points(const SimilarityMap& map, const TokenGrid& grid, const SelectionConfig& cfg) {
  return select_points(map, grid.geometry(), cfg);
}

}  // namespace sasp
