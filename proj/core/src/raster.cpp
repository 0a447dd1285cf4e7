#include "ircr/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ircr::raster {

namespace {

constexpr std::array<std::array<double, 3>, 3> kSobelX{{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}};
constexpr std::array<std::array<double, 3>, 3> kSobelY{{{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}}};

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

void require_plane(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(who) + ": expected an h x w tensor");
}

}  // namespace

Gradients sobel_gradients(const Tensor& map) {
  require_plane(map, "sobel_gradients");
  const std::size_t h = map.height();
  const std::size_t w = map.width();
  Gradients g{Tensor::plane(h, w), Tensor::plane(h, w)};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double sx = 0.0;
      double sy = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        const std::size_t rr = clamp_index(static_cast<std::ptrdiff_t>(r) + dr, h);
        for (int dc = -1; dc <= 1; ++dc) {
          const std::size_t cc = clamp_index(static_cast<std::ptrdiff_t>(c) + dc, w);
          const double v = map.at(rr, cc);
          sx += kSobelX[dr + 1][dc + 1] * v;
          sy += kSobelY[dr + 1][dc + 1] * v;
        }
      }
      g.gx.at(r, c) = sx;
      g.gy.at(r, c) = sy;
    }
  }
  return g;
}

Tensor sobel_adjoint(const Tensor& grad_gx, const Tensor& grad_gy) {
  require_plane(grad_gx, "sobel_adjoint");
  if (!same_shape(grad_gx, grad_gy)) throw std::invalid_argument("sobel_adjoint: shape mismatch");
  const std::size_t h = grad_gx.height();
  const std::size_t w = grad_gx.width();
  Tensor out = Tensor::plane(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double ax = grad_gx.at(r, c);
      const double ay = grad_gy.at(r, c);
      if (ax == 0.0 && ay == 0.0) continue;
      for (int dr = -1; dr <= 1; ++dr) {
        const std::size_t rr = clamp_index(static_cast<std::ptrdiff_t>(r) + dr, h);
        for (int dc = -1; dc <= 1; ++dc) {
          const std::size_t cc = clamp_index(static_cast<std::ptrdiff_t>(c) + dc, w);
          out.at(rr, cc) += kSobelX[dr + 1][dc + 1] * ax + kSobelY[dr + 1][dc + 1] * ay;
        }
      }
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  if (radius < 1) throw std::invalid_argument("dilate: radius must be >= 1");
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  const auto rad = static_cast<std::ptrdiff_t>(radius);
  // Square element is separable: horizontal pass then vertical pass.
  BinaryMask rows(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c) - rad));
      const auto hi = std::min<std::size_t>(w - 1, c + static_cast<std::size_t>(rad));
      for (std::size_t k = lo; k <= hi; ++k) rows.set(r, k, true);
    }
  }
  BinaryMask out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!rows.at(r, c)) continue;
      const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(r) - rad));
      const auto hi = std::min<std::size_t>(h - 1, r + static_cast<std::size_t>(rad));
      for (std::size_t k = lo; k <= hi; ++k) out.set(k, c, true);
    }
  }
  return out;
}

InstanceLabelMap connected_components(const BinaryMask& mask) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  InstanceLabelMap out(h, w);
  std::vector<std::size_t> stack;
  std::int32_t next = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || out[start] != 0) continue;
    ++next;
    out[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / w;
      const std::size_t c = p % w;
      auto visit = [&](std::size_t q) {
        if (mask[q] && out[q] == 0) {
          out[q] = next;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - w);
      if (r + 1 < h) visit(p + w);
      if (c > 0) visit(p - 1);
      if (c + 1 < w) visit(p + 1);
    }
  }
  return out;
}

Point centroid(const InstanceLabelMap& labels, std::int32_t k) {
  double sr = 0.0;
  double sc = 0.0;
  std::size_t n = 0;
  const std::size_t w = labels.width();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != k) continue;
    sr += static_cast<double>(i / w);
    sc += static_cast<double>(i % w);
    ++n;
  }
  if (k <= 0 || n == 0) throw std::invalid_argument("unknown instance id");
  return {sr / static_cast<double>(n), sc / static_cast<double>(n)};
}

std::vector<Point> centroids(const InstanceLabelMap& labels) {
  const auto k = static_cast<std::size_t>(labels.max_label());
  std::vector<double> sr(k + 1, 0.0), sc(k + 1, 0.0);
  std::vector<std::size_t> n(k + 1, 0);
  const std::size_t w = labels.width();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    if (l == 0) continue;
    sr[l] += static_cast<double>(i / w);
    sc[l] += static_cast<double>(i % w);
    ++n[l];
  }
  std::vector<Point> out(k + 1);
  for (std::size_t l = 1; l <= k; ++l) {
    if (n[l] == 0) continue;
    out[l] = {sr[l] / static_cast<double>(n[l]), sc[l] / static_cast<double>(n[l])};
  }
  return out;
}

BinaryMask instance_boundary(const BinaryMask& mask, int dilation_radius) {
  if (dilation_radius < 1) throw std::invalid_argument("instance_boundary: dilation radius must be >= 1");
  // Pixels outside the frame count as background, so a mask touching the
  // image border gets an edge there.
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  Tensor padded = Tensor::plane(h + 2, w + 2);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) padded.at(r + 1, c + 1) = mask.at(r, c) ? 1.0 : 0.0;
  }
  const Gradients g = sobel_gradients(padded);
  BinaryMask edge(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      edge.set(r, c, std::abs(g.gx.at(r + 1, c + 1)) + std::abs(g.gy.at(r + 1, c + 1)) > 0.0);
    }
  }
  return dilate(edge, dilation_radius);
}

Tensor rescale_unit(const Tensor& plane) {
  Tensor out = plane;
  if (plane.empty()) return out;
  const auto [lo, hi] = std::minmax_element(plane.values().begin(), plane.values().end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(out.values().begin(), out.values().end(), 0.0);
    return out;
  }
  const double base = *lo;
  for (double& v : out.values()) v = (v - base) / range;
  return out;
}

}  // namespace ircr::raster
