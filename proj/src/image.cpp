#include "wormloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wormloc/error.hpp"
#include "wormloc/rng.hpp"

namespace wormloc {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::bad_magic: return "bad_magic";
    case Errc::unknown_version: return "unknown_version";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::corrupt_file: return "corrupt_file";
    case Errc::empty_mask: return "empty_mask";
    case Errc::numeric: return "numeric";
  }
  return "unknown";
}

double distance(const PixelPoint& a, const PixelPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

GrayImage::GrayImage(int width, int height, float fill) : width_(width), height_(height) {
  require(width > 0 && height > 0, "image dimensions must be positive");
  require(fill >= 0.0f && fill <= 1.0f, "image intensity outside [0,1]");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  require(width > 0 && height > 0, "image dimensions must be positive");
  require(data_.size() == static_cast<std::size_t>(width) * height, "image data length does not match dimensions");
  for (float v : data_) require(std::isfinite(v) && v >= 0.0f && v <= 1.0f, "image intensity outside [0,1]");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  require(n > 0, "below() needs n > 0");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = next();
  } while (r >= limit);
  return r % n;
}

double SeededRng::normal() {
  constexpr double two_pi = 6.283185307179586476925286766559;
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

std::uint64_t SeededRng::digest() const {
  std::ostringstream os;
  os << engine_;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace wormloc
