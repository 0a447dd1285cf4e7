#include "ircr/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace ircr::metrics {

namespace {

struct Overlap {
  std::size_t n_gt = 0;    // max label + 1
  std::size_t n_pred = 0;  // max label + 1
  std::vector<std::uint64_t> gt_area;
  std::vector<std::uint64_t> pred_area;
  std::vector<std::uint64_t> inter;  // n_gt x n_pred

  std::uint64_t at(std::size_t g, std::size_t p) const { return inter[g * n_pred + p]; }
  std::uint64_t uni(std::size_t g, std::size_t p) const { return gt_area[g] + pred_area[p] - at(g, p); }
};

Overlap overlap(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  if (gt.height() != pred.height() || gt.width() != pred.width()) {
    throw std::invalid_argument("metrics: label maps differ in shape");
  }
  Overlap o;
  o.n_gt = static_cast<std::size_t>(std::max(gt.max_label(), 0)) + 1;
  o.n_pred = static_cast<std::size_t>(std::max(pred.max_label(), 0)) + 1;
  o.gt_area.assign(o.n_gt, 0);
  o.pred_area.assign(o.n_pred, 0);
  o.inter.assign(o.n_gt * o.n_pred, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto g = static_cast<std::size_t>(std::max(gt[i], 0));
    const auto p = static_cast<std::size_t>(std::max(pred[i], 0));
    ++o.gt_area[g];
    ++o.pred_area[p];
    ++o.inter[g * o.n_pred + p];
  }
  return o;
}

std::size_t present(const std::vector<std::uint64_t>& area) {
  return static_cast<std::size_t>(std::count_if(area.begin() + 1, area.end(), [](std::uint64_t a) { return a > 0; }));
}

}  // namespace

double aji(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  const Overlap o = overlap(gt, pred);
  const std::size_t gt_count = present(o.gt_area);
  const std::size_t pred_count = present(o.pred_area);
  if (gt_count == 0) return pred_count == 0 ? 1.0 : 0.0;

  std::uint64_t num = 0;
  std::uint64_t den = 0;
  std::vector<char> used(o.n_pred, 0);
  for (std::size_t g = 1; g < o.n_gt; ++g) {
    if (o.gt_area[g] == 0) continue;
    std::size_t best = 0;
    for (std::size_t p = 1; p < o.n_pred; ++p) {
      if (o.pred_area[p] == 0 || o.at(g, p) == 0) continue;
      // IoU comparison by cross-multiplication keeps ties exact.
      if (best == 0 || o.at(g, p) * o.uni(g, best) > o.at(g, best) * o.uni(g, p)) best = p;
    }
    if (best == 0) {
      den += o.gt_area[g];
      continue;
    }
    num += o.at(g, best);
    den += o.uni(g, best);
    used[best] = 1;
  }
  for (std::size_t p = 1; p < o.n_pred; ++p) {
    if (!used[p]) den += o.pred_area[p];
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double dice_metric(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  if (gt.height() != pred.height() || gt.width() != pred.width()) {
    throw std::invalid_argument("metrics: label maps differ in shape");
  }
  std::uint64_t g = 0;
  std::uint64_t s = 0;
  std::uint64_t both = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool a = gt[i] > 0;
    const bool b = pred[i] > 0;
    g += a ? 1 : 0;
    s += b ? 1 : 0;
    both += (a && b) ? 1 : 0;
  }
  if (g + s == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(g + s);
}

F1Result f1_obj(const InstanceLabelMap& gt, const InstanceLabelMap& pred, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) throw std::invalid_argument("f1_obj: iou_thresh must be in (0,1)");
  const Overlap o = overlap(gt, pred);
  const std::size_t gt_count = present(o.gt_area);
  const std::size_t pred_count = present(o.pred_area);
  F1Result r;
  if (gt_count == 0 && pred_count == 0) {
    r.f1 = 1.0;
    return r;
  }
  // (iou, gt, pred) for every overlapping pair, best first.
  std::vector<std::tuple<double, std::size_t, std::size_t>> cands;
  for (std::size_t g = 1; g < o.n_gt; ++g) {
    for (std::size_t p = 1; p < o.n_pred; ++p) {
      if (o.at(g, p) == 0) continue;
      cands.emplace_back(static_cast<double>(o.at(g, p)) / static_cast<double>(o.uni(g, p)), g, p);
    }
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<char> gt_used(o.n_gt, 0);
  std::vector<char> pred_used(o.n_pred, 0);
  for (const auto& [iou, g, p] : cands) {
    if (iou < iou_thresh) break;
    if (gt_used[g] || pred_used[p]) continue;
    gt_used[g] = 1;
    pred_used[p] = 1;
    ++r.tp;
  }
  r.fp = pred_count - r.tp;
  r.fn = gt_count - r.tp;
  r.f1 = 2.0 * static_cast<double>(r.tp) / static_cast<double>(2 * r.tp + r.fp + r.fn);
  return r;
}

MetricReport evaluate_pair(const InstanceLabelMap& gt, const InstanceLabelMap& pred, double iou_thresh) {
  const F1Result f = f1_obj(gt, pred, iou_thresh);
  return {aji(gt, pred), dice_metric(gt, pred), f.f1, f.tp, f.fp, f.fn};
}

}  // namespace ircr::metrics
