#include "wormloc/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "wormloc/error.hpp"
#include "wormloc/imaging.hpp"

namespace wormloc::baseline {

namespace {

// Counter-clockwise as displayed (y down): E, NE, N, NW, W, SW, S, SE.
constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

struct Px {
  int x, y;
  friend bool operator==(const Px&, const Px&) = default;
};

int direction_of(Px from, Px to) {
  for (int d = 0; d < 8; ++d)
    if (from.x + kDx[d] == to.x && from.y + kDy[d] == to.y) return d;
  return -1;
}

double shoelace(const Contour& c) {
  double a = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c[i];
    const auto& q = c[(i + 1) % c.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

}  // namespace

Contour trace_contour(const BinaryMask& m) {
  const std::size_t components = imaging::count_components(m, 8);
  if (components == 0) fail(Errc::empty_mask, "trace_contour: mask has no foreground");
  if (components > 1)
    fail(Errc::invalid_argument, "trace_contour: mask has " + std::to_string(components) + " components, expected 1");

  Px start{-1, -1};
  for (int y = 0; y < m.height() && start.x < 0; ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(x, y)) {
        start = {x, y};
        break;
      }
  auto fg = [&](Px p) { return m.contains(p.x, p.y) && m.at(p.x, p.y); };

  // Returns the next boundary pixel around `cur`, searching counter-clockwise
  // from just after `back`, and updates `back` to the last background
  // neighbor visited.
  auto step = [&](Px cur, Px& back) -> std::optional<Px> {
    const int b = direction_of(cur, back);
    for (int i = 1; i <= 8; ++i) {
      const int d = (b + i) % 8;
      const Px cand{cur.x + kDx[d], cur.y + kDy[d]};
      if (fg(cand)) {
        const int pd = (b + i - 1) % 8;
        back = {cur.x + kDx[pd], cur.y + kDy[pd]};
        return cand;
      }
    }
    return std::nullopt;
  };

  Contour out{{static_cast<double>(start.x), static_cast<double>(start.y)}};
  Px back{start.x - 1, start.y};
  auto first = step(start, back);
  if (!first) fail(Errc::invalid_argument, "trace_contour: degenerate single-pixel mask");
  Px cur = *first;
  const Px second = cur;
  const std::size_t limit = 4 * static_cast<std::size_t>(m.width()) * m.height() + 8;
  while (out.size() < limit) {
    Px b = back;
    const auto next = step(cur, b);
    if (cur == start && next && *next == second) break;
    out.push_back({static_cast<double>(cur.x), static_cast<double>(cur.y)});
    back = b;
    cur = *next;
  }
  if (out.size() < 4)
    fail(Errc::invalid_argument, "trace_contour: degenerate contour with " + std::to_string(out.size()) + " points");
  return out;
}

std::vector<double> corner_angles(const Contour& c, std::size_t k, std::vector<bool>* convex) {
  require(k >= 1 && c.size() > 2 * k, "corner_angles: contour must be longer than 2k");
  const std::size_t n = c.size();
  const double orient = shoelace(c);
  std::vector<double> angles(n);
  if (convex) convex->assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const PixelPoint& a = c[(i + n - k) % n];
    const PixelPoint& p = c[i];
    const PixelPoint& b = c[(i + k) % n];
    const double ux = a.x - p.x, uy = a.y - p.y;
    const double vx = b.x - p.x, vy = b.y - p.y;
    const double nu = std::hypot(ux, uy), nv = std::hypot(vx, vy);
    if (nu == 0.0 || nv == 0.0) {
      angles[i] = M_PI;
      continue;
    }
    angles[i] = std::acos(std::clamp((ux * vx + uy * vy) / (nu * nv), -1.0, 1.0));
    const double cross = (p.x - a.x) * (b.y - p.y) - (p.y - a.y) * (b.x - p.x);
    if (convex) (*convex)[i] = cross * orient > 0.0;
  }
  return angles;
}

std::optional<Proposals> endpoint_proposals(const Contour& c, std::size_t k, double theta_max) {
  std::vector<bool> convex;
  const std::vector<double> angles = corner_angles(c, k, &convex);
  const std::size_t n = c.size();
  auto pick = [&](auto&& allowed) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < n; ++i) {
      if (!convex[i] || !(angles[i] < theta_max) || !allowed(i)) continue;
      if (!best || angles[i] < angles[*best]) best = i;
    }
    return best;
  };
  const auto tail = pick([](std::size_t) { return true; });
  if (!tail) return std::nullopt;
  const auto head = pick([&](std::size_t i) {
    const std::size_t d = i > *tail ? i - *tail : *tail - i;
    return std::min(d, n - d) > k;
  });
  if (!head) return std::nullopt;
  return Proposals{c[*tail], c[*head], {*tail, angles[*tail]}, {*head, angles[*head]}};
}

}  // namespace wormloc::baseline
