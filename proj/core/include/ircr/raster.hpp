#pragma once

#include <cstdint>
#include <utility>

#include "ircr/tensor.hpp"

// Elementary grid operations shared by segmentation, matching, priors and losses.
// All functions are pure.
namespace ircr::raster {

struct Gradients {
  Tensor gx;
  Tensor gy;
};

/// 3x3 Sobel (correlation form) with edge-clamp padding, unnormalized.
/// gx uses [[-1,0,1],[-2,0,2],[-1,0,1]], gy its transpose.
Gradients sobel_gradients(const Tensor& map);

/// Adjoint of the Sobel operator: accumulates grad_gx / grad_gy back onto
/// the input grid (used by gradient-based losses).
Tensor sobel_adjoint(const Tensor& grad_gx, const Tensor& grad_gy);

/// Dilation with a square (2*radius+1)^2 structuring element.
BinaryMask dilate(const BinaryMask& mask, int radius);

/// 4-connected labeling; labels follow raster order of each component's first pixel.
InstanceLabelMap connected_components(const BinaryMask& mask);

struct Point {
  double row = 0.0;
  double col = 0.0;
};

/// Mean pixel coordinate of instance k. Throws std::invalid_argument("unknown instance id").
Point centroid(const InstanceLabelMap& labels, std::int32_t k);

/// Centroids for labels 1..K in one pass (index 0 unused).
std::vector<Point> centroids(const InstanceLabelMap& labels);

/// Sobel edge (|gx|+|gy| > 0 on the 0/1 mask) dilated by `dilation_radius`.
BinaryMask instance_boundary(const BinaryMask& mask, int dilation_radius = 1);

/// Values mapped linearly onto [0,1]; a constant plane maps to all zeros.
Tensor rescale_unit(const Tensor& plane);

}  // namespace ircr::raster
