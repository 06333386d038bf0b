#include "wormloc/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wormloc/error.hpp"
#include "wormloc/image_io.hpp"

namespace wormloc::render {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string header(double vx, double vy, double vw, double vh, double scale) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"" + num(vx) + " " + num(vy) + " " +
         num(vw) + " " + num(vh) + "\" width=\"" + num(vw * scale) + "\" height=\"" + num(vh * scale) + "\">\n";
}

std::string embedded_image(const GrayImage& img) {
  const auto png = io::encode_png(img);
  return "<image x=\"-0.5\" y=\"-0.5\" width=\"" + std::to_string(img.width()) + "\" height=\"" +
         std::to_string(img.height()) + "\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64," +
         base64(png) + "\"/>\n";
}

std::string marker(const PixelPoint& p, const char* color, const char* title) {
  return "<circle cx=\"" + num(p.x) + "\" cy=\"" + num(p.y) + "\" r=\"2.5\" fill=\"" + color +
         "\" stroke=\"white\" stroke-width=\"0.5\"><title>" + title + "</title></circle>\n";
}

}  // namespace

std::string base64(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string prediction_svg(const GrayImage& img, const KeypointPair& pred, const std::optional<KeypointPair>& gt,
                           const dsnt::Heatmap& head_heatmap) {
  const int n = img.width();
  const int k = head_heatmap.size;
  require(k >= 1, "heatmap must be non-empty");
  std::string s = header(-0.5, -0.5, n, n + 14, 4.0);
  s += embedded_image(img);
  const double cell = static_cast<double>(n) / k;
  const double peak = *std::max_element(head_heatmap.values.begin(), head_heatmap.values.end());
  s += "<g id=\"head-heatmap\" stroke=\"#ffd000\" stroke-width=\"0.4\">\n";
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double a = peak > 0.0 ? 0.45 * head_heatmap.at(i, j) / peak : 0.0;
      s += "<rect x=\"" + num(j * cell - 0.5) + "\" y=\"" + num(i * cell - 0.5) + "\" width=\"" + num(cell) +
           "\" height=\"" + num(cell) + "\" fill=\"#ffd000\" fill-opacity=\"" + num(a) + "\"/>\n";
    }
  }
  s += "</g>\n";
  if (gt) {
    s += marker(gt->head, "#00c000", "ground truth head");
    s += marker(gt->tail, "#e00000", "ground truth tail");
  }
  s += marker(pred.head, "#0050ff", "predicted head");
  s += marker(pred.tail, "#e000e0", "predicted tail");
  s += "<g font-family=\"sans-serif\" font-size=\"5\">\n";
  const char* legend[4][2] = {{"#00c000", "gt head"}, {"#0050ff", "pred head"}, {"#e00000", "gt tail"},
                              {"#e000e0", "pred tail"}};
  for (int i = 0; i < 4; ++i) {
    const double x = i * n / 4.0;
    s += "<circle cx=\"" + num(x + 2) + "\" cy=\"" + num(n + 6.0) + "\" r=\"2\" fill=\"" + legend[i][0] + "\"/>";
    s += "<text x=\"" + num(x + 5) + "\" y=\"" + num(n + 8.0) + "\">" + legend[i][1] + "</text>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

std::string baseline_svg(const GrayImage& img, const baseline::Contour& contour,
                         const std::optional<baseline::Proposals>& proposals) {
  std::string s = header(-0.5, -0.5, img.width(), img.height(), 4.0);
  s += embedded_image(img);
  s += "<polygon fill=\"none\" stroke=\"#e00000\" stroke-width=\"0.6\" points=\"";
  for (std::size_t i = 0; i < contour.size(); ++i) {
    if (i) s += ' ';
    s += num(contour[i].x) + "," + num(contour[i].y);
  }
  s += "\"/>\n";
  if (proposals) {
    s += marker(proposals->tail, "#0050ff", "tail proposal (sharpest corner)");
    s += marker(proposals->head, "#0050ff", "head proposal (second sharpest corner)");
  }
  s += "</svg>\n";
  return s;
}

namespace {

struct Series {
  std::vector<double> values;
  const char* color;
  const char* label;
};

std::string panel(double x0, double y0, double w, double h, const std::string& title, const std::vector<Series>& series,
                  double ymin, double ymax, std::size_t epochs) {
  std::string s = "<g transform=\"translate(" + num(x0) + "," + num(y0) + ")\" font-family=\"sans-serif\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  s += "<text x=\"" + num(w / 2) + "\" y=\"-8\" font-size=\"13\" text-anchor=\"middle\">" + title + "</text>\n";
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double xmax = std::max<double>(1.0, static_cast<double>(epochs));
  auto px = [&](double epoch) { return epochs > 1 ? (epoch - 1.0) / (xmax - 1.0) * w : w / 2; };
  auto py = [&](double v) { return h - (v - ymin) / (ymax - ymin) * h; };
  for (int t = 0; t <= 4; ++t) {
    const double v = ymin + (ymax - ymin) * t / 4.0;
    s += "<line x1=\"0\" x2=\"" + num(w) + "\" y1=\"" + num(py(v)) + "\" y2=\"" + num(py(v)) +
         "\" stroke=\"#ddd\"/><text x=\"-4\" y=\"" + num(py(v) + 4) + "\" font-size=\"10\" text-anchor=\"end\">" +
         num(v) + "</text>\n";
  }
  s += "<text x=\"" + num(w / 2) + "\" y=\"" + num(h + 28) + "\" font-size=\"11\" text-anchor=\"middle\">epoch (1.." +
       std::to_string(epochs) + ")</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& se = series[i];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(se.color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t e = 0; e < se.values.size(); ++e) {
      if (e) s += ' ';
      s += num(px(static_cast<double>(e + 1))) + "," + num(py(se.values[e]));
    }
    s += "\"/>\n";
    s += "<text x=\"" + num(w - 6) + "\" y=\"" + num(16.0 + 14.0 * i) + "\" font-size=\"11\" text-anchor=\"end\" fill=\"" +
         se.color + "\">" + se.label + "</text>\n";
  }
  s += "</g>\n";
  return s;
}

}  // namespace

std::string metrics_svg(std::span<const std::vector<train::MetricsRow>> runs) {
  require(!runs.empty(), "metrics plot needs at least one run");
  std::size_t epochs = runs[0].size();
  for (const auto& r : runs) epochs = std::min(epochs, r.size());
  require(epochs >= 1, "metrics plot needs at least one epoch");
  std::vector<double> train_loss(epochs, 0.0), val_loss(epochs, 0.0), pck(epochs, 0.0);
  for (const auto& r : runs)
    for (std::size_t e = 0; e < epochs; ++e) {
      train_loss[e] += r[e].train_loss / runs.size();
      val_loss[e] += r[e].val_loss / runs.size();
      pck[e] += r[e].val_pck15 / runs.size();
    }
  double lmax = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) lmax = std::max({lmax, train_loss[e], val_loss[e]});

  const double w = 360, h = 240;
  std::string s = header(0, 0, 2 * w + 160, h + 90, 1.0);
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(2 * w + 160) + "\" height=\"" + num(h + 90) + "\" fill=\"white\"/>\n";
  const std::string suffix = " (mean of " + std::to_string(runs.size()) + (runs.size() == 1 ? " run)" : " runs)");
  s += panel(60, 30, w, h, "Loss" + suffix,
             {{train_loss, "#1f77b4", "train"}, {val_loss, "#ff7f0e", "validation"}}, 0.0, lmax * 1.05, epochs);
  s += panel(w + 130, 30, w, h, "Validation PCK@15 (%)" + suffix, {{pck, "#2ca02c", "val PCK@15"}}, 0.0, 100.0,
             epochs);
  s += "</svg>\n";
  return s;
}

}  // namespace wormloc::render
