#include "wormloc/eval.hpp"

#include <cmath>
#include <cstdio>

#include "wormloc/error.hpp"

namespace wormloc::eval {

double norm_to_pixels(double c, int width) {
  require(width >= 1, "width must be >= 1");
  return ((c + 1.0) * width - 1.0) / 2.0;
}

double pixels_to_norm(double px, int width) {
  require(width >= 1, "width must be >= 1");
  return (2.0 * px + 1.0) / width - 1.0;
}

PixelPoint norm_to_pixels(const dsnt::NormCoord& c, int width) {
  return {norm_to_pixels(c.x, width), norm_to_pixels(c.y, width)};
}

dsnt::NormCoord pixels_to_norm(const PixelPoint& p, int width) {
  return {pixels_to_norm(p.x, width), pixels_to_norm(p.y, width)};
}

PckFraction pck(std::span<const KeypointPair> preds, std::span<const KeypointPair> gts, double p) {
  if (preds.size() != gts.size())
    fail(Errc::shape_mismatch, "pck: " + std::to_string(preds.size()) + " predictions for " +
                                   std::to_string(gts.size()) + " labels");
  require(!preds.empty(), "pck needs at least one prediction");
  std::size_t head = 0;
  std::size_t tail = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (distance(preds[i].head, gts[i].head) <= p) ++head;
    if (distance(preds[i].tail, gts[i].tail) <= p) ++tail;
  }
  const double n = static_cast<double>(preds.size());
  return {head / n, tail / n};
}

AccuracyTable accuracy_table(std::span<const KeypointPair> preds, std::span<const KeypointPair> gts,
                             std::span<const double> thresholds) {
  require(!thresholds.empty(), "at least one PCK threshold is needed");
  AccuracyTable t;
  t.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double p : thresholds) {
    require(p >= 0.0, "PCK thresholds must be >= 0");
    const PckFraction f = pck(preds, gts, p);
    t.head.push_back(100.0 * f.head);
    t.tail.push_back(100.0 * f.tail);
    t.average.push_back(0.5 * (100.0 * f.head + 100.0 * f.tail));
  }
  return t;
}

Prediction predict(const nn::NetworkParams<float>& params, const GrayImage& img) {
  const int n = params.arch.input_size;
  if (img.width() != n || img.height() != n)
    fail(Errc::shape_mismatch, "image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                   ", network expects " + std::to_string(n) + "x" + std::to_string(n));
  const auto trace = nn::forward(params, nn::image_to_input<float>(img));
  const int k = params.arch.heatmap_size;
  auto to_heatmap = [k](const nn::Tensor3<float>& z) {
    dsnt::Heatmap h(k);
    for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = z.data[i];
    return h;
  };
  const auto grids = dsnt::coord_grids(k);
  Prediction out;
  out.p_head = dsnt::softmax2d(to_heatmap(trace.z_head));
  out.p_tail = dsnt::softmax2d(to_heatmap(trace.z_tail));
  out.norm = {dsnt::dsnt(out.p_head, grids), dsnt::dsnt(out.p_tail, grids)};
  out.pixels = {norm_to_pixels(out.norm.head, img.width()), norm_to_pixels(out.norm.tail, img.height())};
  return out;
}

Evaluation evaluate(const nn::NetworkParams<float>& params, std::span<const data::Sample> samples,
                    std::span<const double> thresholds) {
  require(!samples.empty(), "evaluate needs at least one sample");
  Evaluation ev;
  std::vector<KeypointPair> gts;
  for (const auto& s : samples) {
    ev.predictions.push_back(predict(params, s.image).pixels);
    gts.push_back({s.head, s.tail});
  }
  ev.table = accuracy_table(ev.predictions, gts, thresholds);
  return ev;
}

PckReport aggregate_runs(std::span<const AccuracyTable> tables) {
  require(!tables.empty(), "aggregate_runs needs at least one table");
  PckReport r;
  r.thresholds = tables[0].thresholds;
  r.runs = tables.size();
  const std::size_t nt = r.thresholds.size();
  for (const auto& t : tables)
    if (t.thresholds != r.thresholds || t.head.size() != nt || t.tail.size() != nt || t.average.size() != nt)
      fail(Errc::shape_mismatch, "aggregate_runs: tables have different thresholds");
  auto cell = [&](auto column, std::size_t j) {
    double mean = 0.0;
    for (const auto& t : tables) mean += (t.*column)[j];
    mean /= static_cast<double>(tables.size());
    double ss = 0.0;
    for (const auto& t : tables) ss += ((t.*column)[j] - mean) * ((t.*column)[j] - mean);
    const double sd = tables.size() > 1 ? std::sqrt(ss / static_cast<double>(tables.size() - 1)) : 0.0;
    return ReportCell{mean, sd};
  };
  for (std::size_t j = 0; j < nt; ++j) {
    r.head.push_back(cell(&AccuracyTable::head, j));
    r.tail.push_back(cell(&AccuracyTable::tail, j));
    r.average.push_back(cell(&AccuracyTable::average, j));
  }
  return r;
}

namespace {

std::string fmt_threshold(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

struct Group {
  const char* name;
  const std::vector<ReportCell>* cells;
};

}  // namespace

std::string format_report_text(const PckReport& report) {
  const Group groups[] = {{"Head", &report.head}, {"Tail", &report.tail}, {"Average", &report.average}};
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-22s %s (n=%zu runs)\n", "", "Percentage Accuracy", report.runs);
  out += line;
  for (const auto& g : groups) {
    for (std::size_t j = 0; j < report.thresholds.size(); ++j) {
      const std::string label = std::string(g.name) + " (PCK @ " + fmt_threshold(report.thresholds[j]) + ")";
      std::snprintf(line, sizeof line, "%-22s %6.2f \xC2\xB1 %5.2f\n", label.c_str(), (*g.cells)[j].mean,
                    (*g.cells)[j].stddev);
      out += line;
    }
  }
  return out;
}

std::string format_report_csv(const PckReport& report) {
  const Group groups[] = {{"head", &report.head}, {"tail", &report.tail}, {"average", &report.average}};
  std::string out = "keypoint,threshold,mean,std,runs\n";
  char line[128];
  for (const auto& g : groups) {
    for (std::size_t j = 0; j < report.thresholds.size(); ++j) {
      std::snprintf(line, sizeof line, "%s,%s,%.4f,%.4f,%zu\n", g.name, fmt_threshold(report.thresholds[j]).c_str(),
                    (*g.cells)[j].mean, (*g.cells)[j].stddev, report.runs);
      out += line;
    }
  }
  return out;
}

}  // namespace wormloc::eval
