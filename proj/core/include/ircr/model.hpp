#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ircr/tensor.hpp"

// Tiny two-head encoder-decoder (NP + HV branches) with hand-written
// forward/backward passes, Adam and the EMA teacher update.
//
//   image -> conv3x3(c1) relu -> maxpool2 -> conv3x3(c2) relu -> maxpool2
//         -> up2 ++ enc2 -> conv3x3(c3) relu -> up2 ++ enc1 -> conv3x3(c4) relu
//         -> 1x1 NP head (2, softmax) and 1x1 HV head (2, tanh)
//
// `++` is channel concatenation with the encoder activation at that scale.
namespace ircr::model {

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t enc1 = 8;
  std::size_t enc2 = 16;
  std::size_t dec1 = 16;
  std::size_t dec2 = 8;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered weight tensors. Student and teacher share one layout.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg);  // all zeros

  static ModelParams he_normal(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<NamedTensor>& tensors() noexcept { return tensors_; }
  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }
  std::size_t parameter_count() const noexcept;

  Tensor& operator[](std::size_t i) { return tensors_[i].value; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i].value; }
  std::size_t size() const noexcept { return tensors_.size(); }

  ModelParams zeros_like() const;
  bool same_layout(const ModelParams& other) const noexcept;
  bool all_finite() const noexcept;
  ModelParams& operator+=(const ModelParams& other);
  ModelParams& operator*=(double s);

  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  ModelConfig cfg_{};
  std::vector<NamedTensor> tensors_;
};

/// Same layout as ModelParams; holds d loss / d weight.
using Gradients = ModelParams;

struct ForwardCache;

struct ForwardOutput {
  Tensor np_probs;  // 2 x h x w, softmax over channels (1 = nucleus)
  Tensor hv;        // 2 x h x w, tanh
  Tensor features;  // 4 x h x w: np_probs ++ hv
  Tensor boundary;  // h x w: nucleus probability
  std::shared_ptr<const ForwardCache> cache;
};

/// Throws std::invalid_argument("input size must be divisible by 4").
ForwardOutput forward(const ModelParams& params, const Tensor& image, bool keep_cache = true);

/// Exact reverse-mode gradients for upstream grads on np_probs and hv.
Gradients backward(const ModelParams& params, const ForwardOutput& output, const Tensor& grad_np,
                   const Tensor& grad_hv);

/// As backward(), but adds into `accum`.
void backward_accumulate(const ModelParams& params, const ForwardOutput& output, const Tensor& grad_np,
                         const Tensor& grad_hv, Gradients& accum);

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static AdamState zeros_for(const ModelParams& params);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam step, in place.
void adam_step(ModelParams& params, const Gradients& grads, double lr, AdamState& state, const AdamConfig& cfg = {});

struct EmaConfig {
  double alpha = 0.95;

  void validate() const;
};

/// teacher <- alpha * teacher + (1 - alpha) * student, in place.
void ema_update(ModelParams& teacher, const ModelParams& student, const EmaConfig& cfg = {});

}  // namespace ircr::model
