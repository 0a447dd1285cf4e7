#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ircr/checkpoint.hpp"
#include "ircr/model.hpp"
#include "oracles.hpp"

using namespace ircr;
namespace fs = std::filesystem;

namespace {

double weighted_output(const model::ModelParams& p, const Tensor& img, const Tensor& wn, const Tensor& wh) {
  const auto out = model::forward(p, img, false);
  double s = 0.0;
  for (std::size_t i = 0; i < wn.size(); ++i) s += wn[i] * out.np_probs[i];
  for (std::size_t i = 0; i < wh.size(); ++i) s += wh[i] * out.hv[i];
  return s;
}

}  // namespace

TEST(Model, LayoutAndCount) {
  const model::ModelConfig cfg;
  const auto p = model::ModelParams::he_normal(cfg, 1);
  const std::vector<std::string> names = {"enc1.weight", "enc1.bias", "enc2.weight", "enc2.bias",
                                          "dec1.weight", "dec1.bias", "dec2.weight", "dec2.bias",
                                          "np_head.weight", "np_head.bias", "hv_head.weight", "hv_head.bias"};
  ASSERT_EQ(p.size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(p.tensors()[i].name, names[i]);
  // 3x3 convs 1->8, 8->16, 32->16, 24->8 and two 1x1 heads 8->2
  const std::size_t expect = (9 * 1 * 8 + 8) + (9 * 8 * 16 + 16) + (9 * 32 * 16 + 16) + (9 * 24 * 8 + 8) + 2 * (8 * 2 + 2);
  EXPECT_EQ(p.parameter_count(), expect);
  for (double v : p[1].values()) EXPECT_EQ(v, 0.0);
}

TEST(Model, HeInitStatistics) {
  model::ModelConfig cfg;
  cfg.enc2 = 64;
  const auto p = model::ModelParams::he_normal(cfg, 2);
  const Tensor& w = p[2];  // enc2.weight, fan_in 8*9 = 72
  double sum = 0.0, sq = 0.0;
  for (double v : w.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 2.0 / 72.0, 0.2 * 2.0 / 72.0);
}

TEST(Model, ForwardShapesAndRanges) {
  std::mt19937_64 rng(3);
  const auto p = model::ModelParams::he_normal({}, 3);
  const auto out = model::forward(p, oracle::random_plane(16, 12, rng, 0.0, 1.0));
  EXPECT_EQ(out.np_probs.dims(), (std::vector<std::size_t>{2, 16, 12}));
  EXPECT_EQ(out.hv.dims(), (std::vector<std::size_t>{2, 16, 12}));
  EXPECT_EQ(out.features.dims(), (std::vector<std::size_t>{4, 16, 12}));
  EXPECT_EQ(out.boundary, out.np_probs.channel(1));
  const std::size_t plane = 16 * 12;
  for (std::size_t i = 0; i < plane; ++i) {
    EXPECT_NEAR(out.np_probs[i] + out.np_probs[plane + i], 1.0, 1e-9);
    EXPECT_LE(std::abs(out.hv[i]), 1.0);
  }
  EXPECT_THROW(model::forward(p, Tensor::plane(10, 8)), std::invalid_argument);
}

TEST(Model, Deterministic) {
  std::mt19937_64 rng(4);
  const Tensor img = oracle::random_plane(8, 8, rng, 0.0, 1.0);
  const auto a = model::forward(model::ModelParams::he_normal({}, 9), img);
  const auto b = model::forward(model::ModelParams::he_normal({}, 9), img);
  EXPECT_EQ(a.features, b.features);
  EXPECT_FALSE(model::forward(model::ModelParams::he_normal({}, 10), img).features == a.features);
}

TEST(Model, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto p = model::ModelParams::he_normal({}, 5);
  // non-zero biases so every ReLU regime is exercised
  for (std::size_t t = 1; t < p.size(); t += 2)
    for (double& v : p[t].values()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  const Tensor img = oracle::random_plane(8, 8, rng, 0.0, 1.0);
  const Tensor wn = oracle::random_stack(2, 8, 8, rng);
  const Tensor wh = oracle::random_stack(2, 8, 8, rng);
  const auto out = model::forward(p, img);
  const auto grads = model::backward(p, out, wn, wh);
  double worst = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    const Tensor fd = oracle::numeric_grad(
        [&](const Tensor& x) {
          auto q = p;
          q[t] = x;
          return weighted_output(q, img, wn, wh);
        },
        p[t]);
    const double err = oracle::rel_error(grads[t], fd);
    worst = std::max(worst, err);
    EXPECT_LT(err, 1e-4) << p.tensors()[t].name;
  }
  RecordProperty("worst_rel_error", std::to_string(worst));
}

TEST(Model, BackwardNeedsCache) {
  const auto p = model::ModelParams::he_normal({}, 6);
  const auto out = model::forward(p, Tensor::plane(8, 8), false);
  EXPECT_THROW(model::backward(p, out, Tensor::stack(2, 8, 8), Tensor::stack(2, 8, 8)), std::logic_error);
}

TEST(Model, AccumulateAdds) {
  std::mt19937_64 rng(7);
  const auto p = model::ModelParams::he_normal({}, 7);
  const auto out = model::forward(p, oracle::random_plane(8, 8, rng, 0.0, 1.0));
  const Tensor wn = oracle::random_stack(2, 8, 8, rng);
  const Tensor wh = oracle::random_stack(2, 8, 8, rng);
  const auto g = model::backward(p, out, wn, wh);
  auto acc = g;
  model::backward_accumulate(p, out, wn, wh, acc);
  auto twice = g;
  twice *= 2.0;
  for (std::size_t t = 0; t < g.size(); ++t) EXPECT_LT(oracle::rel_error(acc[t], twice[t]), 1e-14);
}

TEST(Adam, FirstStepIsLr) {
  auto p = model::ModelParams::he_normal({}, 8);
  const auto before = p;
  auto g = p.zeros_like();
  for (auto& t : g.tensors())
    for (double& v : t.value.values()) v = 1.0;
  auto state = model::AdamState::zeros_for(p);
  model::adam_step(p, g, 0.1, state);
  EXPECT_EQ(state.step, 1u);
  for (std::size_t t = 0; t < p.size(); ++t)
    for (std::size_t i = 0; i < p[t].size(); ++i) EXPECT_NEAR(before[t][i] - p[t][i], 0.1, 1e-6);
}

TEST(Adam, MatchesScalarRecurrence) {
  auto p = model::ModelParams::he_normal({}, 9);
  auto state = model::AdamState::zeros_for(p);
  double theta = p[0][0], m = 0.0, v = 0.0;
  const double grads[] = {0.3, -1.2, 0.7, 2.0};
  for (int k = 0; k < 4; ++k) {
    auto g = p.zeros_like();
    g[0][0] = grads[k];
    model::adam_step(p, g, 0.01, state);
    m = 0.9 * m + 0.1 * grads[k];
    v = 0.999 * v + 0.001 * grads[k] * grads[k];
    const double mh = m / (1.0 - std::pow(0.9, k + 1));
    const double vh = v / (1.0 - std::pow(0.999, k + 1));
    theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p[0][0], theta, 1e-14);
  }
}

TEST(Ema, Recurrence) {
  auto teacher = model::ModelParams::he_normal({}, 10);
  const auto student = model::ModelParams::he_normal({}, 11);
  const double d0 = std::abs(teacher[0][0] - student[0][0]);
  for (int k = 1; k <= 5; ++k) {
    model::ema_update(teacher, student, {0.95});
    EXPECT_NEAR(std::abs(teacher[0][0] - student[0][0]), d0 * std::pow(0.95, k), 1e-12);
  }
  model::ema_update(teacher, student, {0.0});
  EXPECT_EQ(teacher, student);
  EXPECT_THROW((model::EmaConfig{1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((model::EmaConfig{-0.1}.validate()), std::invalid_argument);
}

TEST(Checkpoint, RoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "ircr_ckpt_test";
  fs::remove_all(dir);
  checkpoint::Checkpoint c{model::ModelParams::he_normal({}, 12), model::ModelParams::he_normal({}, 13), {}, 42};
  c.adam = model::AdamState::zeros_for(c.student);
  c.adam.step = 42;
  c.adam.m[3][0] = 0.5;
  checkpoint::save_checkpoint(dir, c);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  const auto back = checkpoint::load_checkpoint(dir);
  EXPECT_EQ(back.student, c.student);
  EXPECT_EQ(back.teacher, c.teacher);
  EXPECT_EQ(back.adam.m, c.adam.m);
  EXPECT_EQ(back.adam.step, 42u);
  EXPECT_EQ(back.step, 42u);
  model::ModelConfig other;
  other.enc1 = 4;
  EXPECT_THROW(checkpoint::load_checkpoint(dir, other), std::invalid_argument);
  fs::remove_all(dir);
}
