#pragma once

#include <cmath>
#include <vector>

#include "ircr/matching.hpp"
#include "ircr/tensor.hpp"

// Training objectives with analytic gradients with respect to the student's
// predicted maps. Teacher maps and all masks are constants: no function here
// returns a gradient for them.
namespace ircr::losses {

/// Dice smoothing constant, literally e^-3.
inline const double kDiceEpsilon = std::exp(-3.0);
inline constexpr double kProbClamp = 1e-7;

struct LossWeights {
  double beta = 0.5;     // boundary term inside MIAC
  double gamma1 = 0.1;   // PIAC
  double gamma2 = 100.0; // MIAC

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  Tensor grad;
};

/// 1 - (2 sum(p*y) + eps) / (sum p + sum y + eps).
LossValue dice_loss(const Tensor& pred, const BinaryMask& gt);

/// Mean over pixels of -sum_c y_c log p_c on a C x h x w probability stack
/// (C = 2: channel 0 background, channel 1 nucleus). `gt_foreground` gives the class.
LossValue ce_loss(const Tensor& pred, const BinaryMask& gt_foreground);

LossValue mse_loss(const Tensor& pred, const Tensor& target);

/// Mean over nuclear pixels of (gx(h^) - gx(h))^2 + (gy(v^) - gy(v))^2.
LossValue msge_loss(const Tensor& pred_hv, const Tensor& gt_hv, const BinaryMask& nuclear_mask);

/// Detached instance masks for one matched pair.
struct PairMasks {
  BinaryMask student;           // S_sigma(i)
  BinaryMask teacher;           // T_i
  BinaryMask student_boundary;  // dilated Sobel edge of S
  BinaryMask teacher_boundary;  // dilated Sobel edge of T
};

struct MiacLossValue {
  double value = 0.0;
  Tensor grad_features;  // d/dF_s, K x h x w
  Tensor grad_boundary;  // d/dB_s, h x w
};

/// (1/N) sum_i ||F_s*S_i - F_t*T_i||^2 + beta ||B_s*S~_i - B_t*T~_i||^2 over
/// matched pairs; zero when there are no pairs.
MiacLossValue miac_loss(const Tensor& f_student, const Tensor& f_teacher, const Tensor& b_student,
                        const Tensor& b_teacher, const std::vector<PairMasks>& pairs, double beta);

/// Folds the boundary gradient into feature channel `channel` (B_s is that channel of F_s).
LossValue fold_boundary(const MiacLossValue& miac, std::size_t channel);

/// sum_c ||(F_s - F_t) * U||^2 / max(N, 1).
LossValue piac_loss(const Tensor& f_student, const Tensor& f_teacher, const Tensor& u, std::size_t instance_count);

struct SupervisedLoss {
  double value = 0.0;
  double dice = 0.0;
  double ce = 0.0;
  double mse = 0.0;
  double msge = 0.0;
  Tensor grad_np;  // 2 x h x w
  Tensor grad_hv;  // 2 x h x w
};

/// Dice + CE on the NP probabilities, MSE + MSGE on HV, unit weights.
SupervisedLoss supervised_loss(const Tensor& np_pred, const Tensor& hv_pred, const BinaryMask& np_gt,
                               const Tensor& hv_gt);

/// gamma1 * PIAC + gamma2 * MIAC for values and gradients.
LossValue consistency_loss(const LossValue& piac, const LossValue& miac, const LossWeights& weights);

}  // namespace ircr::losses
