#pragma once

#include <cstddef>

#include "ircr/tensor.hpp"

// Instance segmentation scores. All functions throw std::invalid_argument on
// mismatched map shapes.
namespace ircr::metrics {

struct F1Result {
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct MetricReport {
  double aji = 0.0;
  double dice = 0.0;
  double f1_obj = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Aggregated Jaccard Index. Each GT instance takes the prediction with the
/// largest IoU (lowest label on ties; a prediction may serve several GT
/// instances); predictions never chosen add their area to the union.
/// Both maps empty -> 1; empty GT with predictions -> 0.
double aji(const InstanceLabelMap& gt, const InstanceLabelMap& pred);

/// Binary foreground Dice; both empty -> 1.
double dice_metric(const InstanceLabelMap& gt, const InstanceLabelMap& pred);

/// Greedy one-to-one matching by descending IoU; a pair is a TP iff IoU >= iou_thresh.
F1Result f1_obj(const InstanceLabelMap& gt, const InstanceLabelMap& pred, double iou_thresh = 0.5);

MetricReport evaluate_pair(const InstanceLabelMap& gt, const InstanceLabelMap& pred, double iou_thresh = 0.5);

}  // namespace ircr::metrics
