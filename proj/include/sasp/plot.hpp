#pragma once

// Minimal raster line plot for loss curves, written as PPM.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

#include "sasp/error.hpp"

namespace sasp {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB triples

  RgbImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill) : width(w), height(h), data(w * h * 3) {
    for (std::size_t k = 0; k < w * h; ++k) std::copy(fill.begin(), fill.end(), data.begin() + 3 * k);
  }

  void set(long x, long y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) return;
    std::copy(c.begin(), c.end(), data.begin() + 3 * (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)));
  }

  // Bresenham.
  void line(long x0, long y0, long x1, long y1, std::array<std::uint8_t, 3> c) {
    const long dx = std::abs(x1 - x0);
    const long dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1;
    const long sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

/// Series drawn left to right, y scaled to [min, max] of the values, with plain axes.
inline RgbImage render_line_plot(std::span<const double> values, std::size_t width = 480, std::size_t height = 240) {
  if (values.empty()) throw ValueError("render_line_plot: no values");
  if (width < 32 || height < 32) throw ValueError("render_line_plot: canvas too small");
  constexpr long kMargin = 12;
  constexpr std::array<std::uint8_t, 3> kWhite{255, 255, 255};
  constexpr std::array<std::uint8_t, 3> kAxis{40, 40, 40};
  constexpr std::array<std::uint8_t, 3> kLine{31, 119, 180};

  RgbImage img(width, height, kWhite);
  const long w = static_cast<long>(width);
  const long h = static_cast<long>(height);
  img.line(kMargin, h - kMargin, w - kMargin, h - kMargin, kAxis);
  img.line(kMargin, kMargin, kMargin, h - kMargin, kAxis);

  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  const double span_x = static_cast<double>(w - 2 * kMargin - 1);
  const double span_y = static_cast<double>(h - 2 * kMargin - 1);
  const auto px = [&](std::size_t i) {
    const double f = values.size() == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(values.size() - 1);
    return kMargin + 1 + std::lround(f * span_x);
  };
  const auto py = [&](double v) {
    const double f = range > 0.0 ? (v - *lo) / range : 0.5;
    return h - kMargin - 1 - std::lround(f * span_y);
  };
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i == 0) {
      img.set(px(0), py(values[0]), kLine);
    } else {
      img.line(px(i - 1), py(values[i - 1]), px(i), py(values[i]), kLine);
    }
  }
  return img;
}

}  // namespace sasp
