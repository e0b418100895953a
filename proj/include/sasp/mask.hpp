#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sasp/error.hpp"

namespace sasp {

/// Row-major 0/1 mask of width x height pixels.
struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), data(w * h, fill) {}
  BinaryMask(std::size_t w, std::size_t h, std::vector<std::uint8_t> values)
      : width(w), height(h), data(std::move(values)) {
    if (data.size() != w * h) throw ShapeError("BinaryMask: value count does not match dimensions");
    if (std::any_of(data.begin(), data.end(), [](std::uint8_t v) { return v > 1; })) {
      throw ValueError("BinaryMask: values must be 0 or 1");
    }
  }

  std::uint8_t at(std::size_t x, std::size_t y) const { return data[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
  }

  bool operator==(const BinaryMask&) const = default;
};

inline void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(what) + ": mask shapes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                     ")");
  }
}

}  // namespace sasp
