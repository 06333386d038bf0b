#include "wormloc/dsnt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wormloc/error.hpp"

namespace wormloc::dsnt {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

void check_same_size(const Heatmap& a, const Heatmap& b, const char* what) {
  if (a.size != b.size || a.values.size() != b.values.size())
    fail(Errc::shape_mismatch, std::string(what) + ": heatmap sizes differ");
}

}  // namespace

CoordinateGrids coord_grids(int k) {
  require(k >= 1, "grid size must be >= 1");
  CoordinateGrids g;
  g.size = k;
  g.x.resize(static_cast<std::size_t>(k) * k);
  g.y.resize(g.x.size());
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      g.x[static_cast<std::size_t>(i) * k + j] = static_cast<double>(2 * j + 1 - k) / k;
      g.y[static_cast<std::size_t>(i) * k + j] = static_cast<double>(2 * i + 1 - k) / k;
    }
  }
  return g;
}

Heatmap softmax2d(const Heatmap& z) {
  require(!z.values.empty(), "softmax2d: empty heatmap");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z.values) {
    if (!std::isfinite(v)) fail(Errc::numeric, "softmax2d: non-finite logit");
    mx = std::max(mx, v);
  }
  Heatmap p(z.size);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    p.values[i] = std::exp(z.values[i] - mx);
    sum += p.values[i];
  }
  for (double& v : p.values) v /= sum;
  p.normalized = true;
  return p;
}

std::vector<double> softmax2d_backward(const Heatmap& p, std::span<const double> dp) {
  if (dp.size() != p.values.size()) fail(Errc::shape_mismatch, "softmax2d_backward: gradient size mismatch");
  double inner = 0.0;
  for (std::size_t i = 0; i < dp.size(); ++i) inner += p.values[i] * dp[i];
  std::vector<double> dz(dp.size());
  for (std::size_t i = 0; i < dp.size(); ++i) dz[i] = p.values[i] * (dp[i] - inner);
  return dz;
}

NormCoord dsnt(const Heatmap& p, const CoordinateGrids& grids) {
  if (p.size != grids.size || p.values.size() != grids.x.size())
    fail(Errc::shape_mismatch, "dsnt: heatmap and grid sizes differ");
  double sum = 0.0;
  for (double v : p.values) {
    if (!(v >= 0.0)) fail(Errc::invalid_argument, "dsnt: heatmap has negative or NaN entries");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) fail(Errc::invalid_argument, "dsnt: heatmap is not normalized (sum " + std::to_string(sum) + ")");
  NormCoord c;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    c.x += p.values[i] * grids.x[i];
    c.y += p.values[i] * grids.y[i];
  }
  return c;
}

std::vector<double> dsnt_backward(const CoordinateGrids& grids, double dx, double dy) {
  std::vector<double> dp(grids.x.size());
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i] = dx * grids.x[i] + dy * grids.y[i];
  return dp;
}

double mse_coord_loss(const NormKeypoints& pred, const NormKeypoints& gt, NormKeypoints* grad) {
  const double e[4] = {pred.head.x - gt.head.x, pred.head.y - gt.head.y, pred.tail.x - gt.tail.x,
                       pred.tail.y - gt.tail.y};
  if (grad) {
    grad->head = {0.5 * e[0], 0.5 * e[1]};
    grad->tail = {0.5 * e[2], 0.5 * e[3]};
  }
  return 0.25 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + e[3] * e[3]);
}

Heatmap gaussian_target(const NormCoord& center, int k, double sigma) {
  require(k >= 1, "grid size must be >= 1");
  require(sigma > 0.0, "gaussian target sigma must be > 0");
  // Invert X_j = (2j + 1 - K) / K to continuous 0-based cell units.
  const double jc = 0.5 * (center.x * k + k - 1);
  const double ic = 0.5 * (center.y * k + k - 1);
  Heatmap g(k);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double e = -((j - jc) * (j - jc) + (i - ic) * (i - ic)) / (2.0 * sigma * sigma);
      g.at(i, j) = e;
      best = std::max(best, e);
    }
  double sum = 0.0;
  for (double& v : g.values) {
    v = std::exp(v - best);
    sum += v;
  }
  for (double& v : g.values) v /= sum;
  g.normalized = true;
  return g;
}

double js_divergence(const Heatmap& p, const Heatmap& q, std::vector<double>* grad_p) {
  check_same_size(p, q, "js_divergence");
  if (grad_p) grad_p->assign(p.values.size(), 0.0);
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double pi = p.values[i];
    const double qi = q.values[i];
    if (pi < 0.0 || qi < 0.0) fail(Errc::invalid_argument, "js_divergence: negative probability");
    const double m = 0.5 * (pi + qi);
    if (pi > 0.0) kl_p += pi * std::log(pi / m);
    if (qi > 0.0) kl_q += qi * std::log(qi / m);
    if (grad_p && m > 0.0) (*grad_p)[i] = 0.5 * std::log(std::max(pi, 1e-300) / m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, kLn2);
}

LossTerms total_loss(const Heatmap& z_head, const Heatmap& z_tail, const NormKeypoints& gt, double lambda_js,
                     double sigma_hm, bool with_grad) {
  require(lambda_js >= 0.0, "lambda_js must be >= 0");
  check_same_size(z_head, z_tail, "total_loss");
  const int k = z_head.size;
  const CoordinateGrids grids = coord_grids(k);

  LossTerms out;
  out.p_head = softmax2d(z_head);
  out.p_tail = softmax2d(z_tail);
  out.pred = {dsnt(out.p_head, grids), dsnt(out.p_tail, grids)};

  NormKeypoints dpred;
  out.mse = mse_coord_loss(out.pred, gt, &dpred);

  std::vector<double> djs_head;
  std::vector<double> djs_tail;
  double js_head = 0.0;
  double js_tail = 0.0;
  if (lambda_js > 0.0) {
    js_head = js_divergence(out.p_head, gaussian_target(gt.head, k, sigma_hm), with_grad ? &djs_head : nullptr);
    js_tail = js_divergence(out.p_tail, gaussian_target(gt.tail, k, sigma_hm), with_grad ? &djs_tail : nullptr);
  }
  out.js = 0.5 * (js_head + js_tail);
  out.total = out.mse + lambda_js * out.js;
  if (!with_grad) return out;

  auto branch = [&](const Heatmap& p, const NormCoord& d, const std::vector<double>& djs) {
    std::vector<double> dp = dsnt_backward(grids, d.x, d.y);
    if (!djs.empty())
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += lambda_js * 0.5 * djs[i];
    return softmax2d_backward(p, dp);
  };
  out.grad_head = branch(out.p_head, dpred.head, djs_head);
  out.grad_tail = branch(out.p_tail, dpred.tail, djs_tail);
  return out;
}

}  // namespace wormloc::dsnt
