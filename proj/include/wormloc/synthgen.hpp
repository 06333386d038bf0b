#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wormloc/image.hpp"
#include "wormloc/rng.hpp"

namespace wormloc::synth {

/// Appearance and shape of a generated worm. Dark body on a bright
/// background, head end blunt and brighter, body tapering toward the tail.
struct WormParams {
  double length_min = 70.0;  // centerline length, px
  double length_max = 110.0;
  double body_width = 15.0;
  double tail_taper = 0.4;    // tail radius as a fraction of the head radius
  double segment_length = 5.0;
  double curvature = 0.25;    // max tangent change per segment, rad
  double head_brightness_boost = 0.2;
  double noise_std = 0.02;
  double background = 0.8;
  double body_intensity = 0.3;
  int canvas = 150;
  double margin = 8.0;
};

void validate(const WormParams& p);

struct Worm {
  GrayImage image;
  PixelPoint head;
  PixelPoint tail;
  std::vector<PixelPoint> centerline;  // head first
};

/// Renders a worm along an explicit centerline (head first). Exposed so
/// tests can build specific shapes.
Worm render_worm(const std::vector<PixelPoint>& centerline, const WormParams& p, SeededRng& rng);

/// Random smooth worm on a p.canvas square. Retries up to 100 times when the
/// curve does not fit or folds onto itself, then throws.
Worm gen_worm(SeededRng& rng, const WormParams& p);

/// Signed distance from `q` to the tapered body (negative inside).
double body_signed_distance(const std::vector<PixelPoint>& centerline, const WormParams& p, const PixelPoint& q);

/// Writes img_NNNNN.png files plus manifest.csv into out_dir. Image i uses
/// the seed mix_seed(seed, i). Returns the manifest path.
std::filesystem::path gen_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                  const WormParams& p = {});

}  // namespace wormloc::synth
