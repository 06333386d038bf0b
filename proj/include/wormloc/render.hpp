#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wormloc/baseline.hpp"
#include "wormloc/dsnt.hpp"
#include "wormloc/image.hpp"
#include "wormloc/train.hpp"

namespace wormloc::render {

std::string base64(std::span<const std::uint8_t> bytes);

/// Crop with ground truth (green head, red tail), predictions (blue head,
/// magenta tail), and the head heatmap drawn as a K x K overlay grid.
std::string prediction_svg(const GrayImage& img, const KeypointPair& pred, const std::optional<KeypointPair>& gt,
                           const dsnt::Heatmap& head_heatmap);

/// Image with the traced contour in red and proposals in blue.
std::string baseline_svg(const GrayImage& img, const baseline::Contour& contour,
                         const std::optional<baseline::Proposals>& proposals);

/// Two panels: loss (train and val) and val PCK@15 against epoch, averaged
/// over runs.
std::string metrics_svg(std::span<const std::vector<train::MetricsRow>> runs);

}  // namespace wormloc::render
