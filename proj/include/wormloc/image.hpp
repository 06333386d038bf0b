#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wormloc/error.hpp"

namespace wormloc {

// Continuous pixel coordinates: x is the column, y the row, and integer
// values fall on pixel centers.
struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

double distance(const PixelPoint& a, const PixelPoint& b);

struct KeypointPair {
  PixelPoint head;
  PixelPoint tail;
  friend bool operator==(const KeypointPair&, const KeypointPair&) = default;
};

/// Row-major grayscale image with intensities in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, float fill = 0.0f);
  GrayImage(int width, int height, std::vector<float> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }

  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<float>& data() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height) : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { data_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::size_t count() const;

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Per-axis scale and translation: x' = sx * x + tx, y' = sy * y + ty.
struct CoordTransform {
  double sx = 1.0;
  double sy = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  PixelPoint apply(const PixelPoint& p) const { return {sx * p.x + tx, sy * p.y + ty}; }
  CoordTransform inverse() const { return {1.0 / sx, 1.0 / sy, -tx / sx, -ty / sy}; }
};

}  // namespace wormloc
