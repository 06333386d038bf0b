#pragma once

#include <span>
#include <string>
#include <vector>

#include "wormloc/dataset.hpp"
#include "wormloc/dsnt.hpp"
#include "wormloc/image.hpp"
#include "wormloc/nn.hpp"

namespace wormloc::eval {

/// Inverse of the coordinate-grid convention: ((c + 1) * W - 1) / 2.
double norm_to_pixels(double c, int width);
double pixels_to_norm(double px, int width);
PixelPoint norm_to_pixels(const dsnt::NormCoord& c, int width);
dsnt::NormCoord pixels_to_norm(const PixelPoint& p, int width);

struct PckFraction {
  double head = 0.0;
  double tail = 0.0;
  double average() const { return 0.5 * (head + tail); }
};

/// Fraction of predictions within Euclidean distance p of ground truth, per
/// keypoint.
PckFraction pck(std::span<const KeypointPair> preds, std::span<const KeypointPair> gts, double p);

/// Single-run accuracies in percent, indexed by threshold.
struct AccuracyTable {
  std::vector<double> thresholds;
  std::vector<double> head;
  std::vector<double> tail;
  std::vector<double> average;
};

AccuracyTable accuracy_table(std::span<const KeypointPair> preds, std::span<const KeypointPair> gts,
                             std::span<const double> thresholds);

struct Prediction {
  KeypointPair pixels;
  dsnt::NormKeypoints norm;
  dsnt::Heatmap p_head;
  dsnt::Heatmap p_tail;
};

/// forward -> softmax -> dsnt -> crop pixels.
Prediction predict(const nn::NetworkParams<float>& params, const GrayImage& img);

struct Evaluation {
  AccuracyTable table;
  std::vector<KeypointPair> predictions;
};

Evaluation evaluate(const nn::NetworkParams<float>& params, std::span<const data::Sample> samples,
                    std::span<const double> thresholds);

struct ReportCell {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Mean and sample standard deviation (n - 1) across runs; std is 0 for a
/// single run.
struct PckReport {
  std::vector<double> thresholds;
  std::vector<ReportCell> head;
  std::vector<ReportCell> tail;
  std::vector<ReportCell> average;
  std::size_t runs = 0;

  std::size_t rows() const { return 3 * thresholds.size(); }
};

PckReport aggregate_runs(std::span<const AccuracyTable> tables);

/// Head rows, then tail rows, then average rows, thresholds ascending within
/// each group.
std::string format_report_text(const PckReport& report);
std::string format_report_csv(const PckReport& report);

}  // namespace wormloc::eval
