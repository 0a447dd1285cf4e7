#include "ircr/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Core>

namespace ircr::model {

namespace {

enum Slot : std::size_t {
  kEnc1W,
  kEnc1B,
  kEnc2W,
  kEnc2B,
  kDec1W,
  kDec1B,
  kDec2W,
  kDec2B,
  kNpW,
  kNpB,
  kHvW,
  kHvB,
  kSlotCount
};

std::vector<NamedTensor> make_layout(const ModelConfig& c) {
  if (c.in_channels == 0 || c.enc1 == 0 || c.enc2 == 0 || c.dec1 == 0 || c.dec2 == 0) {
    throw std::invalid_argument("model config: channel counts must be positive");
  }
  std::vector<NamedTensor> t;
  t.reserve(kSlotCount);
  t.push_back({"enc1.weight", Tensor({c.enc1, c.in_channels, 3, 3})});
  t.push_back({"enc1.bias", Tensor({c.enc1})});
  t.push_back({"enc2.weight", Tensor({c.enc2, c.enc1, 3, 3})});
  t.push_back({"enc2.bias", Tensor({c.enc2})});
  t.push_back({"dec1.weight", Tensor({c.dec1, 2 * c.enc2, 3, 3})});
  t.push_back({"dec1.bias", Tensor({c.dec1})});
  t.push_back({"dec2.weight", Tensor({c.dec2, c.dec1 + c.enc1, 3, 3})});
  t.push_back({"dec2.bias", Tensor({c.dec2})});
  t.push_back({"np_head.weight", Tensor({2, c.dec2})});
  t.push_back({"np_head.bias", Tensor({2})});
  t.push_back({"hv_head.weight", Tensor({2, c.dec2})});
  t.push_back({"hv_head.bias", Tensor({2})});
  return t;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Column matrix of 3x3 neighbourhoods: row (i, ky, kx), column = output pixel; zero padding.
void im2col(const double* in, std::size_t cin, std::size_t h, std::size_t w, double* col) {
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < cin; ++i) {
    const double* src = in + i * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + ((i * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * plane;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          double* dst = row + y * w;
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* s = src + static_cast<std::size_t>(sy) * w;
          if (dx < 0) {
            dst[0] = 0.0;
            std::copy(s, s + w - 1, dst + 1);
          } else if (dx > 0) {
            std::copy(s + 1, s + w, dst);
            dst[w - 1] = 0.0;
          } else {
            std::copy(s, s + w, dst);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
void col2im(const double* col, std::size_t cin, std::size_t h, std::size_t w, double* grad_in) {
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < cin; ++i) {
    double* dst_plane = grad_in + i * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + ((i * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)) * plane;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* g = row + y * w;
          double* d = dst_plane + static_cast<std::size_t>(sy) * w;
          if (dx < 0) {
            for (std::size_t x = 1; x < w; ++x) d[x - 1] += g[x];
          } else if (dx > 0) {
            for (std::size_t x = 0; x + 1 < w; ++x) d[x + 1] += g[x];
          } else {
            for (std::size_t x = 0; x < w; ++x) d[x] += g[x];
          }
        }
      }
    }
  }
}

// Same-size 3x3 convolution with zero padding. Weights are [cout][cin][3][3].
void conv3x3(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
             const double* bias, std::size_t cout, double* out) {
  const std::size_t plane = h * w;
  const std::size_t k = cin * 9;
  std::vector<double> col(k * plane);
  im2col(in, cin, h, w, col.data());
  const Eigen::Map<const RowMat> wm(weight, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
  const Eigen::Map<const RowMat> cm(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(plane));
  Eigen::Map<RowMat> om(out, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(plane));
  om.noalias() = wm * cm;
  for (std::size_t o = 0; o < cout; ++o) {
    double* row = out + o * plane;
    for (std::size_t p = 0; p < plane; ++p) row[p] += bias[o];
  }
}

// Accumulates weight/bias gradients and, when grad_in is non-null, the input gradient.
void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                      std::size_t cout, const double* grad_out, double* grad_weight, double* grad_bias,
                      double* grad_in) {
  const std::size_t plane = h * w;
  const std::size_t k = cin * 9;
  for (std::size_t o = 0; o < cout; ++o) {
    const double* g = grad_out + o * plane;
    double bsum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) bsum += g[p];
    grad_bias[o] += bsum;
  }
  std::vector<double> col(k * plane);
  im2col(in, cin, h, w, col.data());
  const auto ek = static_cast<Eigen::Index>(k);
  const auto ep = static_cast<Eigen::Index>(plane);
  const auto eo = static_cast<Eigen::Index>(cout);
  const Eigen::Map<const RowMat> cm(col.data(), ek, ep);
  const Eigen::Map<const RowMat> gm(grad_out, eo, ep);
  Eigen::Map<RowMat> gw(grad_weight, eo, ek);
  gw.noalias() += gm * cm.transpose();
  if (grad_in == nullptr) return;
  const Eigen::Map<const RowMat> wm(weight, eo, ek);
  RowMat gcol = wm.transpose() * gm;
  col2im(gcol.data(), cin, h, w, grad_in);
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

// Zeroes grad where the post-activation value is not positive.
void relu_backward(const std::vector<double>& act, std::vector<double>& grad) {
  for (std::size_t i = 0; i < act.size(); ++i) {
    if (!(act[i] > 0.0)) grad[i] = 0.0;
  }
}

void maxpool2(const std::vector<double>& in, std::size_t c, std::size_t h, std::size_t w, std::vector<double>& out,
              std::vector<std::uint32_t>& argmax) {
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  out.assign(c * oh * ow, 0.0);
  argmax.assign(c * oh * ow, 0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in.data() + ch * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (2 * y) * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t q : cand) {
          if (src[q] > src[best]) best = q;
        }
        const std::size_t o = (ch * oh + y) * ow + x;
        out[o] = src[best];
        argmax[o] = static_cast<std::uint32_t>(ch * h * w + best);
      }
    }
  }
}

void upsample2(const double* in, std::size_t c, std::size_t h, std::size_t w, double* out) {
  const std::size_t ow = 2 * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in + ch * h * w;
    double* dst = out + ch * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y) {
      const double* s = src + (y / 2) * w;
      double* d = dst + y * ow;
      for (std::size_t x = 0; x < ow; ++x) d[x] = s[x / 2];
    }
  }
}

// Adds the 2x2 sums of grad (c x 2h x 2w) into out (c x h x w).
void upsample2_backward(const double* grad, std::size_t c, std::size_t h, std::size_t w, double* out) {
  const std::size_t gw = 2 * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* g = grad + ch * 4 * h * w;
    double* o = out + ch * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const double* r0 = g + (2 * y) * gw;
      const double* r1 = r0 + gw;
      for (std::size_t x = 0; x < w; ++x) {
        o[y * w + x] += r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
      }
    }
  }
}

void require_layout(const ModelParams& a, const ModelParams& b, const char* who) {
  if (!a.same_layout(b)) throw std::invalid_argument(std::string(who) + ": parameter shape mismatch");
}

}  // namespace

struct ForwardCache {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> input;  // C x h x w
  std::vector<double> a1;     // enc1 x h x w
  std::vector<double> p1;     // enc1 x h/2 x w/2
  std::vector<std::uint32_t> arg1;
  std::vector<double> a2;  // enc2 x h/2 x w/2
  std::vector<double> p2;  // enc2 x h/4 x w/4
  std::vector<std::uint32_t> arg2;
  std::vector<double> cat1;  // (enc2 up ++ a2) at h/2
  std::vector<double> d1;    // dec1 at h/2
  std::vector<double> cat2;  // (dec1 up ++ a1) at h
  std::vector<double> d2;    // dec2 at h
};

ModelParams::ModelParams(const ModelConfig& cfg) : cfg_(cfg), tensors_(make_layout(cfg)) {}

ModelParams ModelParams::he_normal(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < kSlotCount; s += 2) {
    Tensor& wt = p[s];
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < wt.rank(); ++d) fan_in *= wt.dims()[d];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : wt.values()) v = dist(rng);
  }
  return p;
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

ModelParams ModelParams::zeros_like() const { return ModelParams(cfg_); }

bool ModelParams::same_layout(const ModelParams& other) const noexcept {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].value.dims() != other.tensors_[i].value.dims()) return false;
  }
  return true;
}

bool ModelParams::all_finite() const noexcept {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const NamedTensor& t) { return t.value.all_finite(); });
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
  require_layout(*this, other, "ModelParams::operator+=");
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].value += other.tensors_[i].value;
  return *this;
}

ModelParams& ModelParams::operator*=(double s) {
  for (auto& t : tensors_) t.value *= s;
  return *this;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i])) return false;
  }
  return true;
}

ForwardOutput forward(const ModelParams& params, const Tensor& image, bool keep_cache) {
  const ModelConfig& cfg = params.config();
  if (params.size() != kSlotCount) throw std::invalid_argument("forward: parameters not initialized");
  if (image.rank() != 2 && image.rank() != 3) throw std::invalid_argument("forward: image must be C x h x w");
  const std::size_t cin = image.rank() == 3 ? image.channels() : 1;
  if (cin != cfg.in_channels) throw std::invalid_argument("forward: input channel count mismatch");
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  if (h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0) throw std::invalid_argument("input size must be divisible by 4");

  auto cache = std::make_shared<ForwardCache>();
  ForwardCache& c = *cache;
  c.h = h;
  c.w = w;
  c.input.assign(image.values().begin(), image.values().end());
  const std::size_t full = h * w;
  const std::size_t half = full / 4;
  const std::size_t h2 = h / 2;
  const std::size_t w2 = w / 2;

  c.a1.assign(cfg.enc1 * full, 0.0);
  conv3x3(c.input.data(), cin, h, w, params[kEnc1W].data(), params[kEnc1B].data(), cfg.enc1, c.a1.data());
  relu_inplace(c.a1);
  maxpool2(c.a1, cfg.enc1, h, w, c.p1, c.arg1);

  c.a2.assign(cfg.enc2 * half, 0.0);
  conv3x3(c.p1.data(), cfg.enc1, h2, w2, params[kEnc2W].data(), params[kEnc2B].data(), cfg.enc2, c.a2.data());
  relu_inplace(c.a2);
  maxpool2(c.a2, cfg.enc2, h2, w2, c.p2, c.arg2);

  c.cat1.assign(2 * cfg.enc2 * half, 0.0);
  upsample2(c.p2.data(), cfg.enc2, h / 4, w / 4, c.cat1.data());
  std::copy(c.a2.begin(), c.a2.end(), c.cat1.begin() + static_cast<std::ptrdiff_t>(cfg.enc2 * half));
  c.d1.assign(cfg.dec1 * half, 0.0);
  conv3x3(c.cat1.data(), 2 * cfg.enc2, h2, w2, params[kDec1W].data(), params[kDec1B].data(), cfg.dec1,
          c.d1.data());
  relu_inplace(c.d1);

  c.cat2.assign((cfg.dec1 + cfg.enc1) * full, 0.0);
  upsample2(c.d1.data(), cfg.dec1, h2, w2, c.cat2.data());
  std::copy(c.a1.begin(), c.a1.end(), c.cat2.begin() + static_cast<std::ptrdiff_t>(cfg.dec1 * full));
  c.d2.assign(cfg.dec2 * full, 0.0);
  conv3x3(c.cat2.data(), cfg.dec1 + cfg.enc1, h, w, params[kDec2W].data(), params[kDec2B].data(), cfg.dec2,
          c.d2.data());
  relu_inplace(c.d2);

  ForwardOutput out;
  out.np_probs = Tensor::stack(2, h, w);
  out.hv = Tensor::stack(2, h, w);
  const double* npw = params[kNpW].data();
  const double* npb = params[kNpB].data();
  const double* hvw = params[kHvW].data();
  const double* hvb = params[kHvB].data();
  for (std::size_t p = 0; p < full; ++p) {
    double z0 = npb[0];
    double z1 = npb[1];
    double v0 = hvb[0];
    double v1 = hvb[1];
    for (std::size_t ch = 0; ch < cfg.dec2; ++ch) {
      const double x = c.d2[ch * full + p];
      z0 += npw[ch] * x;
      z1 += npw[cfg.dec2 + ch] * x;
      v0 += hvw[ch] * x;
      v1 += hvw[cfg.dec2 + ch] * x;
    }
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m);
    const double e1 = std::exp(z1 - m);
    const double s = e0 + e1;
    out.np_probs[p] = e0 / s;
    out.np_probs[full + p] = e1 / s;
    out.hv[p] = std::tanh(v0);
    out.hv[full + p] = std::tanh(v1);
  }
  out.features = concat_channels(out.np_probs, out.hv);
  out.boundary = out.np_probs.channel(1);
  if (keep_cache) out.cache = std::move(cache);
  return out;
}

void backward_accumulate(const ModelParams& params, const ForwardOutput& output, const Tensor& grad_np,
                         const Tensor& grad_hv, Gradients& accum) {
  if (!output.cache) throw std::invalid_argument("backward: missing cache");
  require_layout(params, accum, "backward");
  const ForwardCache& c = *output.cache;
  const ModelConfig& cfg = params.config();
  const std::size_t h = c.h;
  const std::size_t w = c.w;
  if (!same_shape(grad_np, output.np_probs) || !same_shape(grad_hv, output.hv)) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }
  const std::size_t full = h * w;
  const std::size_t half = full / 4;
  const std::size_t h2 = h / 2;
  const std::size_t w2 = w / 2;

  // Heads.
  std::vector<double> gd2(cfg.dec2 * full, 0.0);
  const double* npw = params[kNpW].data();
  const double* hvw = params[kHvW].data();
  double* g_npw = accum[kNpW].data();
  double* g_npb = accum[kNpB].data();
  double* g_hvw = accum[kHvW].data();
  double* g_hvb = accum[kHvB].data();
  for (std::size_t p = 0; p < full; ++p) {
    const double p0 = output.np_probs[p];
    const double p1 = output.np_probs[full + p];
    const double g0 = grad_np[p];
    const double g1 = grad_np[full + p];
    const double dot = g0 * p0 + g1 * p1;
    const double dz0 = p0 * (g0 - dot);
    const double dz1 = p1 * (g1 - dot);
    const double t0 = output.hv[p];
    const double t1 = output.hv[full + p];
    const double dv0 = grad_hv[p] * (1.0 - t0 * t0);
    const double dv1 = grad_hv[full + p] * (1.0 - t1 * t1);
    g_npb[0] += dz0;
    g_npb[1] += dz1;
    g_hvb[0] += dv0;
    g_hvb[1] += dv1;
    for (std::size_t ch = 0; ch < cfg.dec2; ++ch) {
      const double x = c.d2[ch * full + p];
      g_npw[ch] += dz0 * x;
      g_npw[cfg.dec2 + ch] += dz1 * x;
      g_hvw[ch] += dv0 * x;
      g_hvw[cfg.dec2 + ch] += dv1 * x;
      gd2[ch * full + p] = npw[ch] * dz0 + npw[cfg.dec2 + ch] * dz1 + hvw[ch] * dv0 + hvw[cfg.dec2 + ch] * dv1;
    }
  }
  relu_backward(c.d2, gd2);

  // dec2: input cat2 = up(d1) ++ a1.
  std::vector<double> gcat2((cfg.dec1 + cfg.enc1) * full, 0.0);
  conv3x3_backward(c.cat2.data(), cfg.dec1 + cfg.enc1, h, w, params[kDec2W].data(), cfg.dec2, gd2.data(),
                   accum[kDec2W].data(), accum[kDec2B].data(), gcat2.data());
  std::vector<double> gd1(cfg.dec1 * half, 0.0);
  upsample2_backward(gcat2.data(), cfg.dec1, h2, w2, gd1.data());
  std::vector<double> ga1(gcat2.begin() + static_cast<std::ptrdiff_t>(cfg.dec1 * full), gcat2.end());
  relu_backward(c.d1, gd1);

  // dec1: input cat1 = up(p2) ++ a2.
  std::vector<double> gcat1(2 * cfg.enc2 * half, 0.0);
  conv3x3_backward(c.cat1.data(), 2 * cfg.enc2, h2, w2, params[kDec1W].data(), cfg.dec1, gd1.data(),
                   accum[kDec1W].data(), accum[kDec1B].data(), gcat1.data());
  std::vector<double> gp2(cfg.enc2 * half / 4, 0.0);
  upsample2_backward(gcat1.data(), cfg.enc2, h / 4, w / 4, gp2.data());
  std::vector<double> ga2(gcat1.begin() + static_cast<std::ptrdiff_t>(cfg.enc2 * half), gcat1.end());
  for (std::size_t i = 0; i < gp2.size(); ++i) ga2[c.arg2[i]] += gp2[i];
  relu_backward(c.a2, ga2);

  // enc2: input p1.
  std::vector<double> gp1(cfg.enc1 * half, 0.0);
  conv3x3_backward(c.p1.data(), cfg.enc1, h2, w2, params[kEnc2W].data(), cfg.enc2, ga2.data(), accum[kEnc2W].data(),
                   accum[kEnc2B].data(), gp1.data());
  for (std::size_t i = 0; i < gp1.size(); ++i) ga1[c.arg1[i]] += gp1[i];
  relu_backward(c.a1, ga1);

  // enc1: the image gradient is not needed.
  conv3x3_backward(c.input.data(), cfg.in_channels, h, w, params[kEnc1W].data(), cfg.enc1, ga1.data(),
                   accum[kEnc1W].data(), accum[kEnc1B].data(), nullptr);
}

Gradients backward(const ModelParams& params, const ForwardOutput& output, const Tensor& grad_np,
                   const Tensor& grad_hv) {
  Gradients g = params.zeros_like();
  backward_accumulate(params, output, grad_np, grad_hv, g);
  return g;
}

AdamState AdamState::zeros_for(const ModelParams& params) { return {params.zeros_like(), params.zeros_like(), 0}; }

void adam_step(ModelParams& params, const Gradients& grads, double lr, AdamState& state, const AdamConfig& cfg) {
  require_layout(params, grads, "adam_step");
  if (state.m.size() == 0 && state.v.size() == 0) state = AdamState::zeros_for(params);
  require_layout(params, state.m, "adam_step");
  require_layout(params, state.v, "adam_step");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t s = 0; s < params.size(); ++s) {
    double* p = params[s].data();
    const double* g = grads[s].data();
    double* m = state.m[s].data();
    double* v = state.v[s].data();
    const std::size_t n = params[s].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void EmaConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ema alpha must be in [0,1)");
}

void ema_update(ModelParams& teacher, const ModelParams& student, const EmaConfig& cfg) {
  cfg.validate();
  require_layout(teacher, student, "ema_update");
  for (std::size_t s = 0; s < teacher.size(); ++s) {
    double* t = teacher[s].data();
    const double* v = student[s].data();
    for (std::size_t i = 0; i < teacher[s].size(); ++i) t[i] = cfg.alpha * t[i] + (1.0 - cfg.alpha) * v[i];
  }
}

}  // namespace ircr::model
