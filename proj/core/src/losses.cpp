#include "ircr/losses.hpp"

#include <algorithm>
#include <stdexcept>

#include "ircr/raster.hpp"

namespace ircr::losses {

namespace {

void require_plane_match(const Tensor& t, const BinaryMask& m, const char* who) {
  if (t.rank() != 2 || t.height() != m.height() || t.width() != m.width()) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
  }
}

}  // namespace

void LossWeights::validate() const {
  if (beta < 0.0 || gamma1 < 0.0 || gamma2 < 0.0) throw std::invalid_argument("loss weights must be >= 0");
}

LossValue dice_loss(const Tensor& pred, const BinaryMask& gt) {
  require_plane_match(pred, gt, "dice_loss");
  double inter = 0.0;
  double psum = 0.0;
  double ysum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double y = gt[i] ? 1.0 : 0.0;
    inter += pred[i] * y;
    psum += pred[i];
    ysum += y;
  }
  const double num = 2.0 * inter + kDiceEpsilon;
  const double den = psum + ysum + kDiceEpsilon;
  LossValue out{1.0 - num / den, Tensor(pred.dims())};
  const double den2 = den * den;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double y = gt[i] ? 1.0 : 0.0;
    out.grad[i] = -(2.0 * y * den - num) / den2;
  }
  return out;
}

LossValue ce_loss(const Tensor& pred, const BinaryMask& gt_foreground) {
  if (pred.rank() != 3 || pred.channels() != 2 || pred.height() != gt_foreground.height() ||
      pred.width() != gt_foreground.width()) {
    throw std::invalid_argument("ce_loss: expected 2 x h x w probabilities matching the mask");
  }
  const std::size_t plane = pred.height() * pred.width();
  const auto n = static_cast<double>(plane);
  LossValue out{0.0, Tensor(pred.dims())};
  double total = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const std::size_t cls = gt_foreground[i] ? 1 : 0;
    const std::size_t idx = cls * plane + i;
    const double p = pred[idx];
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    total -= std::log(pc);
    if (p > kProbClamp && p < 1.0 - kProbClamp) out.grad[idx] = -1.0 / (n * p);
  }
  out.value = total / n;
  return out;
}

LossValue mse_loss(const Tensor& pred, const Tensor& target) {
  if (!same_shape(pred, target)) throw std::invalid_argument("mse_loss: dim mismatch");
  const auto n = static_cast<double>(pred.size());
  LossValue out{0.0, Tensor(pred.dims())};
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    total += d * d;
    out.grad[i] = 2.0 * d / n;
  }
  out.value = total / n;
  return out;
}

LossValue msge_loss(const Tensor& pred_hv, const Tensor& gt_hv, const BinaryMask& nuclear_mask) {
  if (!same_shape(pred_hv, gt_hv) || pred_hv.rank() != 3 || pred_hv.channels() != 2 ||
      pred_hv.height() != nuclear_mask.height() || pred_hv.width() != nuclear_mask.width()) {
    throw std::invalid_argument("msge_loss: expected matching 2 x h x w maps and mask");
  }
  LossValue out{0.0, Tensor(pred_hv.dims())};
  const std::size_t m = nuclear_mask.count();
  if (m == 0) return out;
  const double inv_m = 1.0 / static_cast<double>(m);

  const Tensor pgx = raster::sobel_gradients(pred_hv.channel(0)).gx;
  const Tensor ggx = raster::sobel_gradients(gt_hv.channel(0)).gx;
  const Tensor pgy = raster::sobel_gradients(pred_hv.channel(1)).gy;
  const Tensor ggy = raster::sobel_gradients(gt_hv.channel(1)).gy;

  const std::size_t h = pred_hv.height();
  const std::size_t w = pred_hv.width();
  Tensor dgx = Tensor::plane(h, w);
  Tensor dgy = Tensor::plane(h, w);
  const Tensor zero = Tensor::plane(h, w);
  double total = 0.0;
  for (std::size_t i = 0; i < nuclear_mask.size(); ++i) {
    if (!nuclear_mask[i]) continue;
    const double ex = pgx[i] - ggx[i];
    const double ey = pgy[i] - ggy[i];
    total += ex * ex + ey * ey;
    dgx[i] = 2.0 * ex * inv_m;
    dgy[i] = 2.0 * ey * inv_m;
  }
  out.value = total * inv_m;
  out.grad.set_channel(0, raster::sobel_adjoint(dgx, zero));
  out.grad.set_channel(1, raster::sobel_adjoint(zero, dgy));
  return out;
}

MiacLossValue miac_loss(const Tensor& f_student, const Tensor& f_teacher, const Tensor& b_student,
                        const Tensor& b_teacher, const std::vector<PairMasks>& pairs, double beta) {
  if (!same_shape(f_student, f_teacher) || f_student.rank() != 3) {
    throw std::invalid_argument("miac_loss: feature stacks must be K x h x w and equal");
  }
  if (!same_shape(b_student, b_teacher) || b_student.rank() != 2 || b_student.height() != f_student.height() ||
      b_student.width() != f_student.width()) {
    throw std::invalid_argument("miac_loss: boundary maps must be h x w");
  }
  MiacLossValue out{0.0, Tensor(f_student.dims()), Tensor(b_student.dims())};
  if (pairs.empty()) return out;
  const std::size_t k = f_student.channels();
  const std::size_t plane = b_student.size();
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (const PairMasks& pm : pairs) {
    if (pm.student.size() != plane || pm.teacher.size() != plane || pm.student_boundary.size() != plane ||
        pm.teacher_boundary.size() != plane) {
      throw std::invalid_argument("miac_loss: mask shape mismatch");
    }
    for (std::size_t i = 0; i < plane; ++i) {
      const bool s = pm.student[i];
      const bool t = pm.teacher[i];
      if (s || t) {
        for (std::size_t c = 0; c < k; ++c) {
          const std::size_t idx = c * plane + i;
          const double d = (s ? f_student[idx] : 0.0) - (t ? f_teacher[idx] : 0.0);
          total += d * d;
          if (s) out.grad_features[idx] += 2.0 * d * inv_n;
        }
      }
      const bool sb = pm.student_boundary[i];
      const bool tb = pm.teacher_boundary[i];
      if (sb || tb) {
        const double d = (sb ? b_student[i] : 0.0) - (tb ? b_teacher[i] : 0.0);
        total += beta * d * d;
        if (sb) out.grad_boundary[i] += 2.0 * beta * d * inv_n;
      }
    }
  }
  out.value = total * inv_n;
  return out;
}

LossValue fold_boundary(const MiacLossValue& miac, std::size_t channel) {
  LossValue out{miac.value, miac.grad_features};
  if (out.grad.empty()) return out;
  const std::size_t plane = miac.grad_boundary.size();
  if (channel >= out.grad.channels()) throw std::out_of_range("fold_boundary: channel out of range");
  for (std::size_t i = 0; i < plane; ++i) out.grad[channel * plane + i] += miac.grad_boundary[i];
  return out;
}

LossValue piac_loss(const Tensor& f_student, const Tensor& f_teacher, const Tensor& u, std::size_t instance_count) {
  if (!same_shape(f_student, f_teacher) || f_student.rank() != 3) {
    throw std::invalid_argument("piac_loss: feature stacks must be K x h x w and equal");
  }
  if (u.rank() != 2 || u.height() != f_student.height() || u.width() != f_student.width()) {
    throw std::invalid_argument("piac_loss: U must be h x w");
  }
  const std::size_t plane = u.size();
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(instance_count, 1));
  LossValue out{0.0, Tensor(f_student.dims())};
  double total = 0.0;
  for (std::size_t c = 0; c < f_student.channels(); ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = c * plane + i;
      const double uu = u[i] * u[i];
      const double d = f_student[idx] - f_teacher[idx];
      total += d * d * uu;
      out.grad[idx] = 2.0 * d * uu * inv_n;
    }
  }
  out.value = total * inv_n;
  return out;
}

SupervisedLoss supervised_loss(const Tensor& np_pred, const Tensor& hv_pred, const BinaryMask& np_gt,
                               const Tensor& hv_gt) {
  if (np_pred.rank() != 3 || np_pred.channels() != 2) throw std::invalid_argument("supervised_loss: np_pred must be 2 x h x w");
  const LossValue dice = dice_loss(np_pred.channel(1), np_gt);
  const LossValue ce = ce_loss(np_pred, np_gt);
  const LossValue mse = mse_loss(hv_pred, hv_gt);
  const LossValue msge = msge_loss(hv_pred, hv_gt, np_gt);

  SupervisedLoss out;
  out.dice = dice.value;
  out.ce = ce.value;
  out.mse = mse.value;
  out.msge = msge.value;
  out.value = dice.value + ce.value + mse.value + msge.value;
  out.grad_np = ce.grad;
  const std::size_t plane = dice.grad.size();
  for (std::size_t i = 0; i < plane; ++i) out.grad_np[plane + i] += dice.grad[i];
  out.grad_hv = mse.grad + msge.grad;
  return out;
}

LossValue consistency_loss(const LossValue& piac, const LossValue& miac, const LossWeights& weights) {
  weights.validate();
  LossValue out;
  out.value = weights.gamma1 * piac.value + weights.gamma2 * miac.value;
  const Tensor* shape = !piac.grad.empty() ? &piac.grad : (!miac.grad.empty() ? &miac.grad : nullptr);
  if (shape == nullptr) return out;
  if (!piac.grad.empty() && !miac.grad.empty() && !same_shape(piac.grad, miac.grad)) {
    throw std::invalid_argument("consistency_loss: gradient shapes differ");
  }
  out.grad = Tensor(shape->dims());
  for (std::size_t i = 0; i < out.grad.size(); ++i) {
    const double gp = piac.grad.empty() ? 0.0 : piac.grad[i];
    const double gm = miac.grad.empty() ? 0.0 : miac.grad[i];
    out.grad[i] = weights.gamma1 * gp + weights.gamma2 * gm;
  }
  return out;
}

}  // namespace ircr::losses
