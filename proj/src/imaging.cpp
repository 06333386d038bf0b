#include "wormloc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

namespace wormloc::imaging {

void validate(const ImagingConfig& cfg) {
  require(cfg.block >= 3 && cfg.block % 2 == 1, "threshold block must be odd and >= 3");
  require(cfg.offset >= 0.0, "threshold offset must be >= 0");
  require(cfg.connectivity == 4 || cfg.connectivity == 8, "connectivity must be 4 or 8");
  require(cfg.pad_fraction >= 0.0, "pad fraction must be >= 0");
  require(cfg.out_size >= 1, "crop size must be >= 1");
}

BinaryMask adaptive_threshold(const GrayImage& img, int block, double offset, Polarity polarity) {
  const int w = img.width();
  const int h = img.height();
  require(block % 2 == 1, "threshold block must be odd, got " + std::to_string(block));
  require(block >= 3 && block <= std::min(w, h),
          "threshold block " + std::to_string(block) + " outside [3, min(width, height)]");
  require(offset >= 0.0, "threshold offset must be >= 0");

  // Summed-area table with a zero first row and column.
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto s = [&](int x, int y) -> double& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += img.at(x, y);
      s(x + 1, y + 1) = s(x + 1, y) + row;
    }
  }

  const int r = block / 2;
  BinaryMask mask(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w, x + r + 1);
      const double sum = s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0);
      const double mean = sum / static_cast<double>((x1 - x0) * (y1 - y0));
      const double v = img.at(x, y);
      const bool fg = polarity == Polarity::dark_foreground ? v < mean - offset : v > mean + offset;
      mask.set(x, y, fg);
    }
  }
  return mask;
}

namespace {

struct Labeling {
  std::vector<int> label;  // -1 for background
  std::vector<std::size_t> sizes;
  std::vector<BoundingBox> boxes;
};

Labeling label_components(const BinaryMask& mask, int connectivity) {
  require(connectivity == 4 || connectivity == 8, "connectivity must be 4 or 8");
  const int w = mask.width();
  const int h = mask.height();
  Labeling out;
  out.label.assign(static_cast<std::size_t>(w) * h, -1);
  static constexpr int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int nbrs = connectivity;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.at(x, y) || out.label[idx] >= 0) continue;
      const int id = static_cast<int>(out.sizes.size());
      int minx = x, maxx = x, miny = y, maxy = y;
      std::size_t n = 0;
      out.label[idx] = id;
      stack.assign(1, static_cast<int>(idx));
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w;
        const int cy = cur / w;
        ++n;
        minx = std::min(minx, cx);
        maxx = std::max(maxx, cx);
        miny = std::min(miny, cy);
        maxy = std::max(maxy, cy);
        for (int k = 0; k < nbrs; ++k) {
          const int nx = cx + dx8[k];
          const int ny = cy + dy8[k];
          if (!mask.contains(nx, ny) || !mask.at(nx, ny)) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
          if (out.label[nidx] >= 0) continue;
          out.label[nidx] = id;
          stack.push_back(static_cast<int>(nidx));
        }
      }
      out.sizes.push_back(n);
      out.boxes.push_back({minx, miny, maxx - minx + 1, maxy - miny + 1});
    }
  }
  return out;
}

}  // namespace

std::size_t count_components(const BinaryMask& mask, int connectivity) {
  return label_components(mask, connectivity).sizes.size();
}

Component largest_component(const BinaryMask& mask, int connectivity) {
  const Labeling lab = label_components(mask, connectivity);
  if (lab.sizes.empty()) fail(Errc::empty_mask, "mask has no foreground pixels");
  std::size_t best = 0;
  for (std::size_t i = 1; i < lab.sizes.size(); ++i) {
    const auto key = [&](std::size_t j) {
      return std::make_tuple(lab.sizes[j], -lab.boxes[j].y0, -lab.boxes[j].x0);
    };
    if (key(i) > key(best)) best = i;
  }
  Component c;
  c.mask = BinaryMask(mask.width(), mask.height());
  c.box = lab.boxes[best];
  c.pixels = lab.sizes[best];
  for (int y = c.box.y0; y < c.box.y0 + c.box.h; ++y)
    for (int x = c.box.x0; x < c.box.x0 + c.box.w; ++x)
      if (lab.label[static_cast<std::size_t>(y) * mask.width() + x] == static_cast<int>(best)) c.mask.set(x, y, true);
  return c;
}

BoundingBox pad_box(const BoundingBox& box, double fraction, int image_width, int image_height) {
  require(fraction >= 0.0, "pad fraction must be >= 0");
  const int pad = static_cast<int>(std::lround(fraction * std::max(box.w, box.h)));
  const int x0 = std::max(0, box.x0 - pad);
  const int y0 = std::max(0, box.y0 - pad);
  const int x1 = std::min(image_width, box.x0 + box.w + pad);
  const int y1 = std::min(image_height, box.y0 + box.h + pad);
  return {x0, y0, x1 - x0, y1 - y0};
}

Crop crop_resize(const GrayImage& img, const BoundingBox& box, int out) {
  require(out >= 1, "crop size must be >= 1");
  require(box.w > 0 && box.h > 0 && box.x0 >= 0 && box.y0 >= 0 && box.x0 + box.w <= img.width() &&
              box.y0 + box.h <= img.height(),
          "bounding box outside image");
  CoordTransform fwd;
  fwd.sx = static_cast<double>(out) / box.w;
  fwd.sy = static_cast<double>(out) / box.h;
  fwd.tx = -(box.x0 - 0.5) * fwd.sx - 0.5;
  fwd.ty = -(box.y0 - 0.5) * fwd.sy - 0.5;
  const CoordTransform inv = fwd.inverse();

  const int w = img.width();
  const int h = img.height();
  std::vector<float> data(static_cast<std::size_t>(out) * out);
  for (int v = 0; v < out; ++v) {
    const double sy = std::clamp(inv.sy * v + inv.ty, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (int u = 0; u < out; ++u) {
      const double sx = std::clamp(inv.sx * u + inv.tx, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
      const double bot = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
      const double val = top * (1.0 - fy) + bot * fy;
      data[static_cast<std::size_t>(v) * out + u] = static_cast<float>(std::clamp(val, 0.0, 1.0));
    }
  }
  return {GrayImage(out, out, std::move(data)), fwd};
}

std::optional<PixelPoint> transfer_label(const PixelPoint& p, const CoordTransform& fwd, int out) {
  const PixelPoint q = fwd.apply(p);
  const double lo = -0.5;
  const double hi = out - 0.5;
  if (!(q.x >= lo && q.x <= hi && q.y >= lo && q.y <= hi)) return std::nullopt;
  return q;
}

GrayImage augment_brightness(const GrayImage& img, SeededRng& rng, double max_frac) {
  require(max_frac >= 0.0 && max_frac <= 1.0, "brightness fraction must be in [0,1]");
  const double delta = rng.uniform(-max_frac, max_frac);
  GrayImage out = img;
  for (float& v : out.data()) v = static_cast<float>(std::clamp(static_cast<double>(v) + delta, 0.0, 1.0));
  return out;
}

PixelPoint rotate_point(const PixelPoint& p, int size, int k) {
  PixelPoint q = p;
  const double n1 = size - 1;
  for (int i = 0; i < ((k % 4) + 4) % 4; ++i) q = {q.y, n1 - q.x};
  return q;
}

std::pair<GrayImage, KeypointPair> augment_rotate(const GrayImage& img, const KeypointPair& labels, int k) {
  require(img.width() == img.height(), "rotation needs a square image");
  require(k >= 0 && k <= 3, "rotation k must be in 0..3");
  const int n = img.width();
  GrayImage out = img;
  if (k != 0) {
    // Destination (x', y') takes the source pixel that rotate_point sends there.
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        int dx = x, dy = y;
        for (int i = 0; i < k; ++i) {
          const int t = dx;
          dx = dy;
          dy = n - 1 - t;
        }
        out.at(dx, dy) = img.at(x, y);
      }
    }
  }
  return {std::move(out), {rotate_point(labels.head, n, k), rotate_point(labels.tail, n, k)}};
}

}  // namespace wormloc::imaging
