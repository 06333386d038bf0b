#pragma once

#include <optional>
#include <utility>

#include "wormloc/image.hpp"
#include "wormloc/rng.hpp"

namespace wormloc::imaging {

enum class Polarity { dark_foreground, bright_foreground };

struct ImagingConfig {
  int block = 51;
  double offset = 0.02;
  Polarity polarity = Polarity::dark_foreground;
  int connectivity = 8;
  double pad_fraction = 0.10;
  int out_size = 150;
};

void validate(const ImagingConfig& cfg);

/// Local-mean adaptive threshold. The window is block x block centered on
/// the pixel, truncated at the image border, and the mean is taken over the
/// pixels that remain.
BinaryMask adaptive_threshold(const GrayImage& img, int block, double offset, Polarity polarity);

struct Component {
  BinaryMask mask;
  BoundingBox box;
  std::size_t pixels = 0;
};

/// Largest connected component under 4- or 8-connectivity. Ties go to the
/// component whose bounding box has the smallest (y0, x0). Throws
/// Errc::empty_mask when the mask has no foreground.
Component largest_component(const BinaryMask& mask, int connectivity);

/// Number of connected components; used for precondition checks.
std::size_t count_components(const BinaryMask& mask, int connectivity);

/// Grows the box by round(fraction * max(w, h)) on every side, clamped to
/// the image.
BoundingBox pad_box(const BoundingBox& box, double fraction, int image_width, int image_height);

struct Crop {
  GrayImage image;
  CoordTransform forward;  // original-image pixels -> crop pixels
};

/// Bilinear resample of `box` to out x out. The box edges (pixel borders,
/// i.e. x0 - 0.5 and x0 + w - 0.5) map onto the crop edges -0.5 and
/// out - 0.5.
Crop crop_resize(const GrayImage& img, const BoundingBox& box, int out = 150);

/// Maps `p` through `fwd`; nullopt when the result leaves [-0.5, out - 0.5]^2.
std::optional<PixelPoint> transfer_label(const PixelPoint& p, const CoordTransform& fwd, int out);

/// Adds one offset drawn from Uniform(-max_frac, max_frac) to every pixel and
/// clamps to [0, 1].
GrayImage augment_brightness(const GrayImage& img, SeededRng& rng, double max_frac = 0.125);

/// Rotates a square image by k * 90 degrees counter-clockwise as displayed
/// (y axis pointing down), carrying both labels along.
std::pair<GrayImage, KeypointPair> augment_rotate(const GrayImage& img, const KeypointPair& labels, int k);

PixelPoint rotate_point(const PixelPoint& p, int size, int k);

}  // namespace wormloc::imaging
