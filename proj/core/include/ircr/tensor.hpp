#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ircr {

/// Dense row-major float64 grid. Images, probability maps, HV maps and
/// feature stacks all travel as Tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor plane(std::size_t height, std::size_t width, double fill = 0.0) {
    return Tensor({height, width}, fill);
  }
  static Tensor stack(std::size_t channels, std::size_t height, std::size_t width,
                      double fill = 0.0) {
    return Tensor({channels, height, width}, fill);
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Trailing two dims are (height, width); a leading dim, if any, is channels.
  std::size_t height() const;
  std::size_t width() const;
  std::size_t channels() const;

  double& at(std::size_t r, std::size_t c) { return data_[r * width() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * width() + c]; }
  double& at(std::size_t ch, std::size_t r, std::size_t c) {
    return data_[(ch * height() + r) * width() + c];
  }
  double at(std::size_t ch, std::size_t r, std::size_t c) const {
    return data_[(ch * height() + r) * width() + c];
  }

  /// Copy of channel `ch` of a rank-3 tensor as an h x w plane.
  Tensor channel(std::size_t ch) const;
  void set_channel(std::size_t ch, const Tensor& plane);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

bool same_shape(const Tensor& a, const Tensor& b) noexcept;

/// Stacks equally sized planes or stacks along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, bool fill = false)
      : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  void set(std::size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }
  bool at(std::size_t r, std::size_t c) const noexcept { return bits_[r * width_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) noexcept { bits_[r * width_ + c] = v ? 1 : 0; }

  std::size_t count() const noexcept;
  bool any() const noexcept { return count() > 0; }
  /// True when every set pixel of this mask is also set in `other`.
  bool subset_of(const BinaryMask& other) const;

  std::span<const std::uint8_t> raw() const noexcept { return bits_; }
  Tensor to_tensor() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Integer instance map: 0 is background, 1..K are instances.
class InstanceLabelMap {
 public:
  InstanceLabelMap() = default;
  InstanceLabelMap(std::size_t height, std::size_t width)
      : height_(height), width_(width), labels_(height * width, 0) {}
  InstanceLabelMap(std::size_t height, std::size_t width, std::vector<std::int32_t> labels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::int32_t operator[](std::size_t i) const noexcept { return labels_[i]; }
  std::int32_t& operator[](std::size_t i) noexcept { return labels_[i]; }
  std::int32_t at(std::size_t r, std::size_t c) const noexcept { return labels_[r * width_ + c]; }
  std::int32_t& at(std::size_t r, std::size_t c) noexcept { return labels_[r * width_ + c]; }

  std::span<const std::int32_t> labels() const noexcept { return labels_; }

  std::int32_t max_label() const noexcept;
  /// Number of instances, assuming the contiguous 1..K invariant holds.
  std::size_t instance_count() const noexcept { return static_cast<std::size_t>(max_label()); }
  /// Pixel count per label; index 0 is background.
  std::vector<std::size_t> areas() const;
  BinaryMask mask_of(std::int32_t label) const;
  BinaryMask foreground() const;
  bool has_label(std::int32_t label) const noexcept;

  /// Renumbers positive labels to 1..K in order of first raster appearance.
  void relabel_contiguous();

  friend bool operator==(const InstanceLabelMap&, const InstanceLabelMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::int32_t> labels_;
};

/// True when both maps induce the same partition of pixels (labels may differ).
bool same_partition(const InstanceLabelMap& a, const InstanceLabelMap& b);

}  // namespace ircr
