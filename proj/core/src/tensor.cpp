#include "ircr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace ircr {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void check_dims(const std::vector<std::size_t>& dims) {
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("tensor dims must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(product(dims_), fill);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (product(dims_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match dims product " +
                                std::to_string(product(dims_)));
  }
}

std::size_t Tensor::height() const {
  if (rank() < 2) throw std::logic_error("tensor has no spatial dims");
  return dims_[rank() - 2];
}

std::size_t Tensor::width() const {
  if (rank() < 2) throw std::logic_error("tensor has no spatial dims");
  return dims_[rank() - 1];
}

std::size_t Tensor::channels() const {
  if (rank() == 2) return 1;
  if (rank() == 3) return dims_[0];
  throw std::logic_error("channels() needs a rank-2 or rank-3 tensor");
}

Tensor Tensor::channel(std::size_t ch) const {
  if (rank() != 3 || ch >= dims_[0]) throw std::out_of_range("channel index out of range");
  const std::size_t plane = dims_[1] * dims_[2];
  Tensor out({dims_[1], dims_[2]});
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(ch * plane), plane, out.data_.begin());
  return out;
}

void Tensor::set_channel(std::size_t ch, const Tensor& plane) {
  if (rank() != 3 || ch >= dims_[0]) throw std::out_of_range("channel index out of range");
  if (plane.size() != dims_[1] * dims_[2]) throw std::invalid_argument("plane size mismatch");
  std::copy(plane.data_.begin(), plane.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(ch * plane.size()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (dims_ != other.dims_) throw std::invalid_argument("tensor shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (dims_ != other.dims_) throw std::invalid_argument("tensor shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

bool same_shape(const Tensor& a, const Tensor& b) noexcept { return a.dims() == b.dims(); }

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("concat_channels: spatial dims differ");
  }
  const std::size_t ca = a.channels();
  const std::size_t cb = b.channels();
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({ca + cb, a.height(), a.width()}, std::move(data));
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::subset_of(const BinaryMask& other) const {
  if (other.height_ != height_ || other.width_ != width_) {
    throw std::invalid_argument("mask shape mismatch");
  }
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

Tensor BinaryMask::to_tensor() const {
  Tensor out = Tensor::plane(height_, width_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = bits_[i] ? 1.0 : 0.0;
  return out;
}

InstanceLabelMap::InstanceLabelMap(std::size_t height, std::size_t width,
                                   std::vector<std::int32_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height * width) throw std::invalid_argument("label buffer size mismatch");
  if (std::any_of(labels_.begin(), labels_.end(), [](std::int32_t v) { return v < 0; })) {
    throw std::invalid_argument("labels must be non-negative");
  }
}

std::int32_t InstanceLabelMap::max_label() const noexcept {
  return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
}

std::vector<std::size_t> InstanceLabelMap::areas() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(max_label()) + 1, 0);
  for (std::int32_t v : labels_) ++out[static_cast<std::size_t>(v)];
  return out;
}

BinaryMask InstanceLabelMap::mask_of(std::int32_t label) const {
  BinaryMask m(height_, width_);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) m.set(i, true);
  }
  return m;
}

BinaryMask InstanceLabelMap::foreground() const {
  BinaryMask m(height_, width_);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] > 0) m.set(i, true);
  }
  return m;
}

bool InstanceLabelMap::has_label(std::int32_t label) const noexcept {
  return label > 0 && std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

void InstanceLabelMap::relabel_contiguous() {
  std::unordered_map<std::int32_t, std::int32_t> remap;
  std::int32_t next = 1;
  for (std::int32_t& v : labels_) {
    if (v == 0) continue;
    auto [it, inserted] = remap.try_emplace(v, next);
    if (inserted) ++next;
    v = it->second;
  }
}

bool same_partition(const InstanceLabelMap& a, const InstanceLabelMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) return false;
  std::unordered_map<std::int32_t, std::int32_t> ab;
  std::unordered_map<std::int32_t, std::int32_t> ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int32_t x = a[i];
    const std::int32_t y = b[i];
    if ((x == 0) != (y == 0)) return false;
    if (x == 0) continue;
    auto [ia, na] = ab.try_emplace(x, y);
    auto [ib, nb] = ba.try_emplace(y, x);
    if (ia->second != y || ib->second != x) return false;
  }
  return true;
}

}  // namespace ircr
