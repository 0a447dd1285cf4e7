#include "ircr/wbis.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "ircr/raster.hpp"

namespace ircr::wbis {

void WbisParams::validate() const {
  if (!(fg_threshold > 0.0 && fg_threshold < 1.0)) throw std::invalid_argument("fg_threshold must be in (0,1)");
  if (!(marker_threshold > 0.0 && marker_threshold < 1.0)) {
    throw std::invalid_argument("marker_threshold must be in (0,1)");
  }
  if (min_instance_area < 1) throw std::invalid_argument("min_instance_area must be >= 1");
}

Tensor energy_landscape(const Tensor& hv) {
  if (hv.rank() != 3 || hv.channels() != 2) throw std::invalid_argument("energy_landscape: hv must be 2 x h x w");
  const Tensor gx = raster::sobel_gradients(hv.channel(0)).gx;
  const Tensor gy = raster::sobel_gradients(hv.channel(1)).gy;
  Tensor ax = gx;
  Tensor ay = gy;
  for (double& v : ax.values()) v = std::abs(v);
  for (double& v : ay.values()) v = std::abs(v);
  ax = raster::rescale_unit(ax);
  ay = raster::rescale_unit(ay);
  Tensor out = Tensor::plane(hv.height(), hv.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(ax[i], ay[i]);
  return out;
}

InstanceLabelMap watershed(const Tensor& energy, const InstanceLabelMap& markers, const BinaryMask& mask) {
  const std::size_t h = markers.height();
  const std::size_t w = markers.width();
  if (energy.rank() != 2 || energy.height() != h || energy.width() != w || mask.height() != h ||
      mask.width() != w) {
    throw std::invalid_argument("watershed: shape mismatch");
  }
  // (energy, insertion order, pixel); min-heap gives FIFO among equal energies.
  using Entry = std::tuple<double, std::uint64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  InstanceLabelMap out(h, w);
  std::vector<std::uint8_t> queued(h * w, 0);
  std::uint64_t order = 0;

  for (std::size_t i = 0; i < markers.size(); ++i) {
    if (markers[i] == 0) continue;
    if (!mask[i]) throw std::invalid_argument("watershed: marker outside mask");
    out[i] = markers[i];
    queued[i] = 1;
    queue.emplace(energy[i], order++, i);
  }
  while (!queue.empty()) {
    const auto [e, ord, p] = queue.top();
    queue.pop();
    const std::size_t r = p / w;
    const std::size_t c = p % w;
    auto visit = [&](std::size_t q) {
      if (!mask[q] || queued[q]) return;
      queued[q] = 1;
      out[q] = out[p];
      queue.emplace(energy[q], order++, q);
    };
    if (r > 0) visit(p - w);
    if (c > 0) visit(p - 1);
    if (c + 1 < w) visit(p + 1);
    if (r + 1 < h) visit(p + w);
  }
  return out;
}

InstanceLabelMap segment_instances(const Tensor& np_prob, const Tensor& hv, const WbisParams& params) {
  params.validate();
  if (np_prob.rank() != 2) throw std::invalid_argument("segment_instances: np_prob must be h x w");
  const std::size_t h = np_prob.height();
  const std::size_t w = np_prob.width();
  if (hv.rank() != 3 || hv.height() != h || hv.width() != w) {
    throw std::invalid_argument("segment_instances: hv shape mismatch");
  }
  BinaryMask fg(h, w);
  for (std::size_t i = 0; i < fg.size(); ++i) fg.set(i, np_prob[i] > params.fg_threshold);
  if (!fg.any()) return InstanceLabelMap(h, w);

  const Tensor energy = energy_landscape(hv);
  BinaryMask seeds(h, w);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds.set(i, fg[i] && energy[i] < params.marker_threshold);
  InstanceLabelMap markers = raster::connected_components(seeds);

  // Seed marker-less foreground components at their lowest-energy pixel.
  const InstanceLabelMap components = raster::connected_components(fg);
  const auto ncomp = static_cast<std::size_t>(components.max_label());
  std::vector<std::uint8_t> has_marker(ncomp + 1, 0);
  std::vector<std::size_t> best(ncomp + 1, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto comp = static_cast<std::size_t>(components[i]);
    if (comp == 0) continue;
    if (markers[i] != 0) has_marker[comp] = 1;
    if (best[comp] == std::numeric_limits<std::size_t>::max() || energy[i] < energy[best[comp]]) best[comp] = i;
  }
  std::int32_t next = markers.max_label();
  for (std::size_t comp = 1; comp <= ncomp; ++comp) {
    if (!has_marker[comp]) markers[best[comp]] = ++next;
  }

  InstanceLabelMap labels = watershed(energy, markers, fg);
  const std::vector<std::size_t> areas = labels.areas();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    if (l != 0 && areas[l] < params.min_instance_area) labels[i] = 0;
  }
  labels.relabel_contiguous();
  return labels;
}

}  // namespace ircr::wbis
