#include "wormloc/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "wormloc/dataset.hpp"
#include "wormloc/error.hpp"
#include "wormloc/image_io.hpp"

namespace wormloc::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr int kMaxAttempts = 100;

std::vector<double> arc_lengths(const std::vector<PixelPoint>& c) {
  std::vector<double> s(c.size(), 0.0);
  for (std::size_t i = 1; i < c.size(); ++i) s[i] = s[i - 1] + distance(c[i - 1], c[i]);
  return s;
}

bool folds_onto_itself(const std::vector<PixelPoint>& c, const std::vector<double>& s, double width) {
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      if (s[j] - s[i] > 1.5 * width && distance(c[i], c[j]) < width) return true;
  return false;
}

}  // namespace

void validate(const WormParams& p) {
  require(p.body_width >= 3.0, "body width must be >= 3 px");
  require(p.length_min > 0.0 && p.length_min <= p.length_max, "need 0 < length_min <= length_max");
  require(p.canvas >= 8, "canvas too small");
  require(p.margin >= 0.0, "margin must be >= 0");
  require(p.length_max + p.body_width + 2.0 * p.margin <= p.canvas, "worm does not fit the canvas after margins");
  require(p.segment_length > 0.0, "segment length must be > 0");
  require(p.curvature >= 0.0, "curvature must be >= 0");
  require(p.tail_taper > 0.0 && p.tail_taper <= 1.0, "tail taper must be in (0, 1]");
  require(p.noise_std >= 0.0, "noise std must be >= 0");
  require(p.background >= 0.0 && p.background <= 1.0, "background intensity outside [0,1]");
  require(p.body_intensity >= 0.0 && p.body_intensity <= 1.0, "body intensity outside [0,1]");
}

namespace {

double signed_distance(const std::vector<PixelPoint>& c, const std::vector<double>& s, double rh, double rt,
                       const PixelPoint& q) {
  const double total = s.back();
  if (c.size() == 1) return distance(q, c[0]) - rh;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const double ax = c[i].x, ay = c[i].y;
    const double bx = c[i + 1].x - ax, by = c[i + 1].y - ay;
    const double len2 = bx * bx + by * by;
    double t = len2 > 0.0 ? ((q.x - ax) * bx + (q.y - ay) * by) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double d = std::hypot(q.x - (ax + t * bx), q.y - (ay + t * by));
    const double arc = s[i] + t * (s[i + 1] - s[i]);
    const double r = total > 0.0 ? rh + (rt - rh) * (arc / total) : rh;
    best = std::min(best, d - r);
  }
  return best;
}

}  // namespace

double body_signed_distance(const std::vector<PixelPoint>& c, const WormParams& p, const PixelPoint& q) {
  require(!c.empty(), "centerline must have at least one point");
  const double rh = 0.5 * p.body_width;
  return signed_distance(c, arc_lengths(c), rh, p.tail_taper * rh, q);
}

Worm render_worm(const std::vector<PixelPoint>& centerline, const WormParams& p, SeededRng& rng) {
  require(!centerline.empty(), "centerline must have at least one point");
  const int n = p.canvas;
  const double rh = 0.5 * p.body_width;
  double minx = centerline[0].x, maxx = minx, miny = centerline[0].y, maxy = miny;
  for (const auto& q : centerline) {
    minx = std::min(minx, q.x);
    maxx = std::max(maxx, q.x);
    miny = std::min(miny, q.y);
    maxy = std::max(maxy, q.y);
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(minx - rh - 2.0)));
  const int x1 = std::min(n - 1, static_cast<int>(std::ceil(maxx + rh + 2.0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(miny - rh - 2.0)));
  const int y1 = std::min(n - 1, static_cast<int>(std::ceil(maxy + rh + 2.0)));

  const PixelPoint head = centerline.front();
  const std::vector<double> arcs = arc_lengths(centerline);
  const double rt = p.tail_taper * rh;
  std::vector<float> data(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double v = p.background;
      if (x >= x0 && x <= x1 && y >= y0 && y <= y1) {
        const PixelPoint q{static_cast<double>(x), static_cast<double>(y)};
        const double coverage = std::clamp(0.5 - signed_distance(centerline, arcs, rh, rt, q), 0.0, 1.0);
        if (coverage > 0.0) {
          const double boost = std::clamp(rh + 1.0 - distance(q, head), 0.0, 1.0) * p.head_brightness_boost;
          v += coverage * (p.body_intensity - p.background + boost);
        }
      }
      if (p.noise_std > 0.0) v += p.noise_std * rng.normal();
      data[static_cast<std::size_t>(y) * n + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return {GrayImage(n, n, std::move(data)), head, centerline.back(), centerline};
}

Worm gen_worm(SeededRng& rng, const WormParams& p) {
  validate(p);
  const double reach = 0.5 * p.body_width + p.margin;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double length = rng.uniform(p.length_min, p.length_max);
    const int segments = std::max(1, static_cast<int>(std::ceil(length / p.segment_length)));
    const double step = length / segments;
    double heading = rng.uniform(0.0, kTwoPi);
    std::vector<PixelPoint> c{{0.0, 0.0}};
    for (int i = 0; i < segments; ++i) {
      if (i > 0) heading += rng.uniform(-p.curvature, p.curvature);
      c.push_back({c.back().x + step * std::cos(heading), c.back().y + step * std::sin(heading)});
    }
    const std::vector<double> s = arc_lengths(c);
    if (folds_onto_itself(c, s, p.body_width)) continue;

    double minx = 0, maxx = 0, miny = 0, maxy = 0;
    for (const auto& q : c) {
      minx = std::min(minx, q.x);
      maxx = std::max(maxx, q.x);
      miny = std::min(miny, q.y);
      maxy = std::max(maxy, q.y);
    }
    const double lo = reach;
    const double hi = p.canvas - 1 - reach;
    const double slack_x = (hi - lo) - (maxx - minx);
    const double slack_y = (hi - lo) - (maxy - miny);
    if (slack_x < 0.0 || slack_y < 0.0) continue;
    const double ox = lo - minx + rng.uniform(0.0, slack_x);
    const double oy = lo - miny + rng.uniform(0.0, slack_y);
    for (auto& q : c) q = {q.x + ox, q.y + oy};
    return render_worm(c, p, rng);
  }
  fail(Errc::numeric, "could not place a worm on the canvas after 100 attempts");
}

std::filesystem::path gen_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                  const WormParams& p) {
  require(n >= 1, "dataset size must be >= 1");
  validate(p);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(Errc::io, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<data::ManifestRow> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SeededRng rng(mix_seed(seed, i));
    const Worm worm = gen_worm(rng, p);
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    io::write_image(worm.image, out_dir / name);
    rows.push_back({name, out_dir / name, worm.head, worm.tail});
  }
  const auto manifest = out_dir / "manifest.csv";
  data::write_manifest(manifest, rows);
  return manifest;
}

}  // namespace wormloc::synth
