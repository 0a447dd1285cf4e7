#include "ircr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "ircr/raster.hpp"

namespace ircr::matching {

DistanceMatrix::DistanceMatrix(std::size_t rows, std::size_t cols, std::vector<double> w)
    : rows_(rows), cols_(cols), w_(std::move(w)) {
  if (w_.size() != rows * cols) throw std::invalid_argument("distance matrix size mismatch");
  for (double v : w_) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("distance matrix entries must be finite and >= 0");
  }
}

double DistanceMatrix::max_entry() const noexcept {
  return w_.empty() ? 0.0 : *std::max_element(w_.begin(), w_.end());
}

DistanceMatrix distance_matrix(const InstanceLabelMap& teacher, const InstanceLabelMap& student) {
  const auto ct = raster::centroids(teacher);
  const auto cs = raster::centroids(student);
  const std::size_t n = ct.size() - 1;
  const std::size_t m = cs.size() - 1;
  DistanceMatrix w(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      w(i, j) = std::hypot(ct[i + 1].row - cs[j + 1].row, ct[i + 1].col - cs[j + 1].col);
    }
  }
  return w;
}

namespace {

struct SquareSolution {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u;
  std::vector<double> v;
};

// Shortest-augmenting-path Hungarian method on an n x n matrix with dual
// potentials; returns the assignment and the final potentials.
SquareSolution hungarian(const std::vector<double>& a, std::size_t n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  SquareSolution s;
  s.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) s.row_to_col[p[j] - 1] = j - 1;
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

// Kuhn augmenting path restricted to free rows/cols of the tight graph.
bool augment(std::size_t row, const std::vector<std::vector<std::size_t>>& adj,
             const std::vector<char>& col_blocked, std::vector<std::ptrdiff_t>& col_owner,
             std::vector<char>& seen) {
  for (std::size_t col : adj[row]) {
    if (col_blocked[col] || seen[col]) continue;
    seen[col] = 1;
    if (col_owner[col] < 0 ||
        augment(static_cast<std::size_t>(col_owner[col]), adj, col_blocked, col_owner, seen)) {
      col_owner[col] = static_cast<std::ptrdiff_t>(row);
      return true;
    }
  }
  return false;
}

bool has_perfect_matching(std::size_t first_row, std::size_t n, const std::vector<std::vector<std::size_t>>& adj,
                          const std::vector<char>& col_blocked) {
  std::vector<std::ptrdiff_t> owner(n, -1);
  for (std::size_t r = first_row; r < n; ++r) {
    std::vector<char> seen(n, 0);
    if (!augment(r, adj, col_blocked, owner, seen)) return false;
  }
  return true;
}

}  // namespace

Assignment munkres(const DistanceMatrix& w) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  if (rows == 0 || cols == 0) return {};
  const std::size_t n = std::max(rows, cols);
  const double sentinel = 1.0 + 2.0 * w.max_entry();
  std::vector<double> a(n * n, sentinel);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) a[i * n + j] = w(i, j);
  }
  const SquareSolution sol = hungarian(a, n);

  // Every optimal assignment lives on the tight edges of an optimal dual, so
  // the lexicographic tie-break is a search over that equality subgraph.
  const double tol = 1e-9 * (1.0 + sentinel);
  std::vector<std::vector<std::size_t>> tight(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a[i * n + j] - sol.u[i] - sol.v[j] <= tol) tight[i].push_back(j);
    }
  }
  std::vector<std::size_t> chosen = sol.row_to_col;
  std::vector<char> blocked(n, 0);
  bool ok = true;
  for (std::size_t i = 0; i < n && ok; ++i) {
    bool fixed = false;
    for (std::size_t j : tight[i]) {
      if (blocked[j]) continue;
      blocked[j] = 1;
      if (has_perfect_matching(i + 1, n, tight, blocked)) {
        chosen[i] = j;
        fixed = true;
        break;
      }
      blocked[j] = 0;
    }
    ok = fixed;
  }
  if (!ok) chosen = sol.row_to_col;

  Assignment out;
  for (std::size_t i = 0; i < rows; ++i) {
    if (chosen[i] < cols) out.emplace_back(i, chosen[i]);
  }
  return out;
}

double assignment_cost(const DistanceMatrix& w, const Assignment& a) {
  double total = 0.0;
  for (const auto& [i, j] : a) total += w(i, j);
  return total;
}

std::vector<Candidate> match_candidates(const InstanceLabelMap& teacher, const InstanceLabelMap& student,
                                        double r_factor) {
  if (!(r_factor > 0.0)) throw std::invalid_argument("r_factor must be > 0");
  if (teacher.height() != student.height() || teacher.width() != student.width()) {
    throw std::invalid_argument("match_instances: label map shapes differ");
  }
  const DistanceMatrix w = distance_matrix(teacher, student);
  const auto at = teacher.areas();
  const auto as = student.areas();
  std::vector<Candidate> out;
  for (const auto& [i, j] : munkres(w)) {
    const double rt = std::sqrt(static_cast<double>(at[i + 1]) / std::numbers::pi);
    const double rs = std::sqrt(static_cast<double>(as[j + 1]) / std::numbers::pi);
    Candidate c;
    c.pair = {static_cast<std::int32_t>(i + 1), static_cast<std::int32_t>(j + 1), w(i, j)};
    c.threshold = r_factor * 0.5 * (rt + rs);
    c.kept = w(i, j) <= c.threshold;
    out.push_back(c);
  }
  return out;
}

MatchResult match_instances(const InstanceLabelMap& teacher, const InstanceLabelMap& student, double r_factor) {
  const auto candidates = match_candidates(teacher, student, r_factor);
  const auto n = static_cast<std::size_t>(teacher.max_label());
  const auto m = static_cast<std::size_t>(student.max_label());
  std::vector<char> t_used(n + 1, 0), s_used(m + 1, 0);
  MatchResult result;
  for (const Candidate& c : candidates) {
    if (!c.kept) continue;
    result.pairs.push_back(c.pair);
    t_used[static_cast<std::size_t>(c.pair.teacher_id)] = 1;
    s_used[static_cast<std::size_t>(c.pair.student_id)] = 1;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    if (!t_used[i]) result.unmatched_teacher.push_back(static_cast<std::int32_t>(i));
  }
  for (std::size_t j = 1; j <= m; ++j) {
    if (!s_used[j]) result.unmatched_student.push_back(static_cast<std::int32_t>(j));
  }
  return result;
}

}  // namespace ircr::matching
