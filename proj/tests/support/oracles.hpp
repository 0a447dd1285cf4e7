#pragma once

// Independent reference implementations used only by tests. They trade speed
// for obviousness and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "ircr/tensor.hpp"

namespace oracle {

using ircr::BinaryMask;
using ircr::InstanceLabelMap;
using ircr::Tensor;

inline Tensor random_plane(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::plane(h, w);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Tensor random_stack(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = -1.0,
                           double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::stack(c, h, w);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline BinaryMask random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, b(rng));
  return m;
}

/// Labels built from up to `k` random axis-aligned rectangles painted in order
/// (later ones overwrite), then renumbered 1..K by first appearance.
inline InstanceLabelMap random_labels(std::size_t h, std::size_t w, int k, std::mt19937_64& rng) {
  InstanceLabelMap m(h, w);
  std::uniform_int_distribution<int> count(0, k);
  const int n = count(rng);
  for (int i = 1; i <= n; ++i) {
    std::uniform_int_distribution<std::size_t> rr(0, h - 1);
    std::uniform_int_distribution<std::size_t> cc(0, w - 1);
    std::size_t r0 = rr(rng), r1 = rr(rng), c0 = cc(rng), c1 = cc(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c) m.at(r, c) = i;
  }
  std::map<int, int> remap;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    auto [it, fresh] = remap.emplace(m[i], static_cast<int>(remap.size()) + 1);
    m[i] = it->second;
  }
  return m;
}

// ---- raster ----------------------------------------------------------------

inline double clamped(const Tensor& t, long r, long c) {
  const long h = static_cast<long>(t.height());
  const long w = static_cast<long>(t.width());
  r = std::clamp(r, 0L, h - 1);
  c = std::clamp(c, 0L, w - 1);
  return t.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

/// Dense correlation with a 3x3 kernel and edge-clamp padding.
inline Tensor correlate3(const Tensor& t, const double k[3][3]) {
  Tensor out = Tensor::plane(t.height(), t.width());
  for (long r = 0; r < static_cast<long>(t.height()); ++r) {
    for (long c = 0; c < static_cast<long>(t.width()); ++c) {
      double s = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) s += k[i + 1][j + 1] * clamped(t, r + i, c + j);
      out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s;
    }
  }
  return out;
}

inline const double kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
inline const double kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

/// BFS flood fill over 4-neighbours; labels in raster order of the seed pixel.
inline InstanceLabelMap flood_fill(const BinaryMask& m) {
  InstanceLabelMap out(m.height(), m.width());
  int next = 0;
  for (std::size_t r0 = 0; r0 < m.height(); ++r0) {
    for (std::size_t c0 = 0; c0 < m.width(); ++c0) {
      if (!m.at(r0, c0) || out.at(r0, c0) != 0) continue;
      ++next;
      std::queue<std::pair<std::size_t, std::size_t>> q;
      q.push({r0, c0});
      out.at(r0, c0) = next;
      while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop();
        const long dr[] = {-1, 1, 0, 0};
        const long dc[] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const long nr = static_cast<long>(r) + dr[d];
          const long nc = static_cast<long>(c) + dc[d];
          if (nr < 0 || nc < 0 || nr >= static_cast<long>(m.height()) || nc >= static_cast<long>(m.width())) continue;
          const auto ur = static_cast<std::size_t>(nr);
          const auto uc = static_cast<std::size_t>(nc);
          if (m.at(ur, uc) && out.at(ur, uc) == 0) {
            out.at(ur, uc) = next;
            q.push({ur, uc});
          }
        }
      }
    }
  }
  return out;
}

// ---- assignment ------------------------------------------------------------

/// Exhaustive minimum over all injective maps from the smaller side.
inline double brute_assignment(const std::vector<std::vector<double>>& w) {
  const std::size_t n = w.size();
  const std::size_t m = n ? w[0].size() : 0;
  if (n == 0 || m == 0) return 0.0;
  const bool rows_small = n <= m;
  const std::size_t small = rows_small ? n : m;
  const std::size_t big = rows_small ? m : n;
  std::vector<std::size_t> perm(big);
  for (std::size_t i = 0; i < big; ++i) perm[i] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small; ++i) s += rows_small ? w[i][perm[i]] : w[perm[i]][i];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---- metrics ---------------------------------------------------------------

using PixelSet = std::set<std::size_t>;

inline std::map<int, PixelSet> instances(const InstanceLabelMap& m) {
  std::map<int, PixelSet> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] > 0) out[m[i]].insert(i);
  return out;
}

inline std::size_t inter_size(const PixelSet& a, const PixelSet& b) {
  std::size_t n = 0;
  for (std::size_t p : a) n += b.count(p);
  return n;
}

/// Aggregated Jaccard index written straight from its definition.
inline double aji(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  const auto g = instances(gt);
  const auto s = instances(pred);
  if (g.empty()) return s.empty() ? 1.0 : 0.0;
  double c = 0.0;
  double u = 0.0;
  std::set<int> claimed;
  for (const auto& [gl, gp] : g) {
    int best = -1;
    std::size_t best_i = 0, best_u = 1;
    for (const auto& [sl, sp] : s) {
      const std::size_t i = inter_size(gp, sp);
      if (i == 0) continue;
      const std::size_t un = gp.size() + sp.size() - i;
      // strictly larger IoU wins; map iteration is by ascending label
      if (best < 0 || static_cast<long double>(i) / un > static_cast<long double>(best_i) / best_u) {
        best = sl;
        best_i = i;
        best_u = un;
      }
    }
    if (best < 0) {
      u += static_cast<double>(gp.size());
    } else {
      c += static_cast<double>(best_i);
      u += static_cast<double>(best_u);
      claimed.insert(best);
    }
  }
  for (const auto& [sl, sp] : s)
    if (!claimed.count(sl)) u += static_cast<double>(sp.size());
  return c / u;
}

inline double dice(const InstanceLabelMap& gt, const InstanceLabelMap& pred) {
  double a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    a += gt[i] > 0;
    b += pred[i] > 0;
    both += gt[i] > 0 && pred[i] > 0;
  }
  return a + b == 0 ? 1.0 : 2 * both / (a + b);
}

struct F1 {
  double f1;
  std::size_t tp, fp, fn;
};

/// Maximum number of disjoint GT/pred pairs with IoU >= thresh, by exhaustive search.
inline F1 f1(const InstanceLabelMap& gt, const InstanceLabelMap& pred, double thresh = 0.5) {
  const auto g = instances(gt);
  const auto s = instances(pred);
  if (g.empty() && s.empty()) return {1.0, 0, 0, 0};
  std::vector<PixelSet> gv, sv;
  for (auto& [l, p] : g) gv.push_back(p);
  for (auto& [l, p] : s) sv.push_back(p);
  auto ok = [&](std::size_t i, std::size_t j) {
    const std::size_t in = inter_size(gv[i], sv[j]);
    return in > 0 && static_cast<double>(in) / static_cast<double>(gv[i].size() + sv[j].size() - in) >= thresh;
  };
  std::vector<char> used(sv.size(), 0);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == gv.size()) return 0;
    std::size_t b = best(i + 1);
    for (std::size_t j = 0; j < sv.size(); ++j) {
      if (used[j] || !ok(i, j)) continue;
      used[j] = 1;
      b = std::max(b, 1 + best(i + 1));
      used[j] = 0;
    }
    return b;
  };
  const std::size_t tp = best(0);
  const std::size_t fp = sv.size() - tp;
  const std::size_t fn = gv.size() - tp;
  return {2.0 * tp / static_cast<double>(2 * tp + fp + fn), tp, fp, fn};
}

// ---- KDE -------------------------------------------------------------------

inline double gaussian_kde(const std::vector<double>& samples, double h, double x) {
  double s = 0.0;
  for (double xi : samples) s += std::exp(-0.5 * (x - xi) * (x - xi) / (h * h));
  return s / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

// ---- finite differences ----------------------------------------------------

/// Central difference of f with respect to every entry of x.
template <class F>
Tensor numeric_grad(F&& f, Tensor x, double step = 1e-5) {
  Tensor g(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// max |a - b| / max(1e-8, max|b|), a scale-aware relative error.
inline double rel_error(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-8);
}

}  // namespace oracle
