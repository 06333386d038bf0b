// Shared helpers for the unit and acceptance suites: independent oracles
// and finite-difference machinery.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wormloc/dsnt.hpp"
#include "wormloc/image.hpp"
#include "wormloc/nn.hpp"
#include "wormloc/rng.hpp"
#include "wormloc/train.hpp"

namespace support {

using namespace wormloc;

// Relative error with a small floor so exact zeros on both sides pass.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central difference of f around x[i].
inline double central_diff(const std::function<double()>& f, double& xi, double h = 1e-5) {
  const double keep = xi;
  xi = keep + h;
  const double up = f();
  xi = keep - h;
  const double down = f();
  xi = keep;
  return (up - down) / (2.0 * h);
}

inline nn::Tensor3<double> random_tensor(SeededRng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  nn::Tensor3<double> t(c, h, w);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so relu has no kink inside the FD step.
inline nn::Tensor3<double> away_from_zero(SeededRng& rng, int c, int h, int w) {
  nn::Tensor3<double> t(c, h, w);
  for (double& v : t.data) {
    const double m = rng.uniform(0.01, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Distinct values with gaps much larger than the FD step, shuffled, so
// pooling never ties.
inline nn::Tensor3<double> distinct_tensor(SeededRng& rng, int c, int h, int w) {
  nn::Tensor3<double> t(c, h, w);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.01 * static_cast<double>(i) - 1.0;
  rng.shuffle(std::span<double>(t.data));
  return t;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline dsnt::Heatmap random_distribution(SeededRng& rng, int k) {
  dsnt::Heatmap h(k);
  double s = 0.0;
  for (double& v : h.values) {
    v = rng.uniform(0.01, 1.0);
    s += v;
  }
  for (double& v : h.values) v /= s;
  h.normalized = true;
  return h;
}

// Plain recursive-free flood fill on a copy; returns one vector of pixel
// indices per component in discovery order.
inline std::vector<std::vector<int>> flood_fill_components(const BinaryMask& m, int connectivity) {
  const int w = m.width(), h = m.height();
  std::vector<int> seen(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::vector<int>> comps;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m.at(x, y) || seen[y * w + x]) continue;
      std::vector<int> comp;
      std::vector<int> queue{y * w + x};
      seen[y * w + x] = 1;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const int cx = queue[q] % w, cy = queue[q] / w;
        comp.push_back(queue[q]);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (connectivity == 4 && dx != 0 && dy != 0) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (!m.at(nx, ny) || seen[ny * w + nx]) continue;
            seen[ny * w + nx] = 1;
            queue.push_back(ny * w + nx);
          }
      }
      comps.push_back(std::move(comp));
    }
  return comps;
}

// Adam written straight from the update rule, one scalar at a time.
struct DirectAdam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  int t = 0;

  DirectAdam(std::size_t n, double lr_, double b1_, double b2_, double eps_)
      : lr(lr_), b1(b1_), b2(b2_), eps(eps_), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& p, const std::vector<double>& g) {
    ++t;
    double b1t = 1.0, b2t = 1.0;
    for (int i = 0; i < t; ++i) {
      b1t *= b1;
      b2t *= b2;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - b1t);
      const double vhat = v[i] / (1 - b2t);
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

// Brute-force PCK: explicit distance loop, counts per keypoint.
inline std::pair<double, double> brute_pck(const std::vector<KeypointPair>& pred, const std::vector<KeypointPair>& gt,
                                           double p) {
  int h = 0, t = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dhx = pred[i].head.x - gt[i].head.x, dhy = pred[i].head.y - gt[i].head.y;
    const double dtx = pred[i].tail.x - gt[i].tail.x, dty = pred[i].tail.y - gt[i].tail.y;
    if (dhx * dhx + dhy * dhy <= p * p) ++h;
    if (dtx * dtx + dty * dty <= p * p) ++t;
  }
  return {static_cast<double>(h) / pred.size(), static_cast<double>(t) / pred.size()};
}

// Loss of the whole network in double precision for one image.
inline double network_loss(const nn::NetworkParams<double>& params, const nn::Tensor3<double>& input,
                           const dsnt::NormKeypoints& gt, double lambda, double sigma) {
  const auto tr = nn::forward(params, input);
  dsnt::Heatmap zh(tr.z_head.height), zt(tr.z_tail.height);
  zh.values.assign(tr.z_head.data.begin(), tr.z_head.data.end());
  zt.values.assign(tr.z_tail.data.begin(), tr.z_tail.data.end());
  return dsnt::total_loss(zh, zt, gt, lambda, sigma, false).total;
}

// Distance of a forward pass from the nearest non-smooth point: the
// smallest |pre-activation| and the smallest gap between the top two
// positive entries of any pooling window.
inline double kink_margin(const nn::ForwardTrace<double>& tr) {
  double m = 1e300;
  for (const auto& t : tr.conv_out) {
    for (double v : t.data) m = std::min(m, std::abs(v));
    for (int c = 0; c < t.channels; ++c)
      for (int y = 0; y < t.height; y += 2)
        for (int x = 0; x < t.width; x += 2) {
          double a = 0.0, b = 0.0;
          for (int dy = 0; dy < 2 && y + dy < t.height; ++dy)
            for (int dx = 0; dx < 2 && x + dx < t.width; ++dx) {
              const double v = std::max(0.0, t.at(c, y + dy, x + dx));
              if (v > a) {
                b = a;
                a = v;
              } else {
                b = std::max(b, v);
              }
            }
          if (a > 0.0) m = std::min(m, a - b);
        }
  }
  return m;
}

inline nn::NetworkParams<double> random_params(const nn::ArchConfig& arch, SeededRng& rng, double scale = 0.5) {
  auto p = nn::zero_params<double>(arch);
  for (auto b : p.buffers())
    for (double& v : b) v = rng.uniform(-scale, scale);
  return p;
}

// Scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wormloc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
