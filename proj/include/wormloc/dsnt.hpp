#pragma once

#include <span>
#include <vector>

namespace wormloc::dsnt {

/// K x K grid of scores, row-major (row i, column j).
struct Heatmap {
  int size = 0;
  std::vector<double> values;
  bool normalized = false;

  Heatmap() = default;
  explicit Heatmap(int k, double fill = 0.0) : size(k), values(static_cast<std::size_t>(k) * k, fill) {}

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * size + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * size + j]; }
};

// X_ij = (2j - K - 1) / K and Y_ij = (2i - K - 1) / K with 1-based i, j:
// cell centers of a K x K partition of (-1, 1).
struct CoordinateGrids {
  int size = 0;
  std::vector<double> x;
  std::vector<double> y;
};

struct NormCoord {
  double x = 0.0;
  double y = 0.0;
};

struct NormKeypoints {
  NormCoord head;
  NormCoord tail;
};

CoordinateGrids coord_grids(int k);

/// exp(z - max z) / sum.
Heatmap softmax2d(const Heatmap& z);

/// dL/dz from dL/dp for p = softmax2d(z).
std::vector<double> softmax2d_backward(const Heatmap& p, std::span<const double> dp);

/// Frobenius inner products <p, X>, <p, Y>. Rejects heatmaps whose mass
/// differs from 1 by more than 1e-6.
NormCoord dsnt(const Heatmap& p, const CoordinateGrids& grids);

/// dL/dp given dL/dx, dL/dy; the Jacobian of dsnt is the grids themselves.
std::vector<double> dsnt_backward(const CoordinateGrids& grids, double dx, double dy);

/// Mean of the four squared component errors. When `grad` is set it
/// receives dL/dpred.
double mse_coord_loss(const NormKeypoints& pred, const NormKeypoints& gt, NormKeypoints* grad = nullptr);

/// Isotropic Gaussian centered on `center` (sigma in heatmap cells),
/// sampled at cell centers and renormalized.
Heatmap gaussian_target(const NormCoord& center, int k, double sigma);

/// JS(P, Q) with natural log and 0 log 0 = 0. `grad_p`, when set, receives
/// dJS/dP_i = 0.5 * log(P_i / M_i).
double js_divergence(const Heatmap& p, const Heatmap& q, std::vector<double>* grad_p = nullptr);

struct LossTerms {
  double total = 0.0;
  double mse = 0.0;
  double js = 0.0;  // 0.5 * (JS_head + JS_tail), before lambda
  NormKeypoints pred;
  Heatmap p_head;
  Heatmap p_tail;
  std::vector<double> grad_head;  // dL/dZ_head
  std::vector<double> grad_tail;
};

/// mse(dsnt(softmax(Z_h)), dsnt(softmax(Z_t)); gt)
///   + lambda_js * 0.5 * [JS(softmax(Z_h), G_h) + JS(softmax(Z_t), G_t)]
/// where G are Gaussian targets at the ground-truth coordinates.
LossTerms total_loss(const Heatmap& z_head, const Heatmap& z_tail, const NormKeypoints& gt, double lambda_js,
                     double sigma_hm, bool with_grad = true);

}  // namespace wormloc::dsnt
