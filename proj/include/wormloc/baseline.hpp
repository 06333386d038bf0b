#pragma once

#include <optional>
#include <vector>

#include "wormloc/image.hpp"

namespace wormloc::baseline {

/// Closed boundary loop of pixel centers; the last point is adjacent to the
/// first and is not repeated.
using Contour = std::vector<PixelPoint>;

/// Moore-neighbor trace of the single 8-connected component in `component`,
/// counter-clockwise as displayed, starting at the topmost-leftmost pixel.
/// Rejects empty, multi-component and degenerate (< 4 point) inputs.
Contour trace_contour(const BinaryMask& component);

struct Corner {
  std::size_t index = 0;
  double angle = 0.0;  // radians, pi on a straight boundary
};

/// Angle at each point between the chords to the points k steps before and
/// after, with a flag for convexity relative to the contour's orientation.
std::vector<double> corner_angles(const Contour& contour, std::size_t k, std::vector<bool>* convex = nullptr);

struct Proposals {
  PixelPoint tail;
  PixelPoint head;
  Corner tail_corner;
  Corner head_corner;
};

/// Sharpest convex corner below theta_max is the tail, the next sharpest at
/// contour distance > k from it the head. nullopt when fewer than two
/// corners qualify.
std::optional<Proposals> endpoint_proposals(const Contour& contour, std::size_t k = 10, double theta_max = 2.0);

}  // namespace wormloc::baseline
