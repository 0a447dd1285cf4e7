#pragma once

#include <cstddef>

#include "ircr/tensor.hpp"

// Watershed-based instance segmentation: turns an NP foreground probability
// map and a 2-channel HV offset map into an instance label map.
namespace ircr::wbis {

struct WbisParams {
  double fg_threshold = 0.5;
  double marker_threshold = 0.4;
  std::size_t min_instance_area = 10;

  void validate() const;
};

/// max(rescale(|gx(hv_h)|), rescale(|gy(hv_v)|)) with per-image min-max rescale.
Tensor energy_landscape(const Tensor& hv);

/// Priority flood from `markers` over `mask`, keyed by (energy, insertion order).
/// Masked pixels unreachable from every marker stay 0.
InstanceLabelMap watershed(const Tensor& energy, const InstanceLabelMap& markers,
                           const BinaryMask& mask);

/// Full pipeline. Foreground components that contain no marker are seeded at
/// their lowest-energy pixel so they are not silently dropped.
InstanceLabelMap segment_instances(const Tensor& np_prob, const Tensor& hv,
                                   const WbisParams& params = {});

}  // namespace ircr::wbis
