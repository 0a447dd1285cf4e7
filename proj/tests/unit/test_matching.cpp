#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ircr/matching.hpp"
#include "ircr/raster.hpp"
#include "oracles.hpp"

using namespace ircr;

namespace {

matching::DistanceMatrix to_matrix(const std::vector<std::vector<double>>& w) {
  matching::DistanceMatrix m(w.size(), w.empty() ? 0 : w[0].size());
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < w[i].size(); ++j) m(i, j) = w[i][j];
  return m;
}

std::vector<std::vector<double>> random_costs(std::size_t n, std::size_t m, std::mt19937_64& rng, bool integer) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> k(0, 4);
  std::vector<std::vector<double>> w(n, std::vector<double>(m));
  for (auto& row : w)
    for (double& v : row) v = integer ? k(rng) : u(rng);
  return w;
}

void square(InstanceLabelMap& l, int label, std::size_t r0, std::size_t c0, std::size_t side) {
  for (std::size_t r = r0; r < r0 + side; ++r)
    for (std::size_t c = c0; c < c0 + side; ++c) l.at(r, c) = label;
}

}  // namespace

TEST(DistanceMatrix, ThreeFourFive) {
  InstanceLabelMap t(6, 6), s(6, 6);
  t.at(0, 0) = 1;
  s.at(3, 4) = 1;
  const auto w = matching::distance_matrix(t, s);
  ASSERT_EQ(w.rows(), 1u);
  ASSERT_EQ(w.cols(), 1u);
  EXPECT_EQ(w(0, 0), 5.0);
  const auto self = matching::distance_matrix(t, t);
  EXPECT_EQ(self(0, 0), 0.0);
}

TEST(DistanceMatrix, MatchesCentroidOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const InstanceLabelMap t = oracle::random_labels(12, 12, 4, rng);
    const InstanceLabelMap s = oracle::random_labels(12, 12, 4, rng);
    const auto w = matching::distance_matrix(t, s);
    auto centre = [](const oracle::PixelSet& px) {
      double r = 0, c = 0;
      for (std::size_t p : px) {
        r += static_cast<double>(p / 12);
        c += static_cast<double>(p % 12);
      }
      return std::pair(r / static_cast<double>(px.size()), c / static_cast<double>(px.size()));
    };
    const auto ti = oracle::instances(t);
    const auto si = oracle::instances(s);
    ASSERT_EQ(w.rows(), ti.size());
    ASSERT_EQ(w.cols(), si.size());
    for (const auto& [a, ap] : ti) {
      for (const auto& [b, bp] : si) {
        const auto [r1, c1] = centre(ap);
        const auto [r2, c2] = centre(bp);
        EXPECT_NEAR(w(static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1)), std::hypot(r1 - r2, c1 - c2),
                    1e-12);
      }
    }
  }
}

TEST(Munkres, BeatsGreedy) {
  const auto a = matching::munkres(to_matrix({{4, 1}, {2, 0}}));
  const matching::Assignment expect = {{0, 1}, {1, 0}};
  EXPECT_EQ(a, expect);
  EXPECT_EQ(matching::assignment_cost(to_matrix({{4, 1}, {2, 0}}), a), 3.0);
}

TEST(Munkres, DominantDiagonal) {
  const auto a = matching::munkres(to_matrix({{0, 5, 5}, {5, 0, 5}, {5, 5, 0}}));
  const matching::Assignment expect = {{0, 0}, {1, 1}, {2, 2}};
  EXPECT_EQ(a, expect);
}

TEST(Munkres, EmptyAndDegenerate) {
  EXPECT_TRUE(matching::munkres(matching::DistanceMatrix(0, 3)).empty());
  EXPECT_TRUE(matching::munkres(matching::DistanceMatrix(2, 0)).empty());
  EXPECT_EQ(matching::munkres(matching::DistanceMatrix(3, 3)).size(), 3u);
}

TEST(Munkres, MatchesExhaustiveSquare) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto w = random_costs(6, 6, rng, trial % 2 == 0);
    const auto m = to_matrix(w);
    EXPECT_NEAR(matching::assignment_cost(m, matching::munkres(m)), oracle::brute_assignment(w), 1e-9);
  }
}

TEST(Munkres, MatchesExhaustiveRectangular) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const std::size_t m = 1 + rng() % 6;
    const auto w = random_costs(n, m, rng, trial % 3 == 0);
    const auto mat = to_matrix(w);
    const auto a = matching::munkres(mat);
    ASSERT_EQ(a.size(), std::min(n, m));
    std::vector<char> rows(n, 0), cols(m, 0);
    for (auto [i, j] : a) {
      EXPECT_FALSE(rows[i]++);
      EXPECT_FALSE(cols[j]++);
    }
    EXPECT_NEAR(matching::assignment_cost(mat, a), oracle::brute_assignment(w), 1e-9);
  }
}

TEST(Munkres, TiesResolveLexicographically) {
  const auto a = matching::munkres(to_matrix({{1, 1}, {1, 1}}));
  const matching::Assignment expect = {{0, 0}, {1, 1}};
  EXPECT_EQ(a, expect);
}

TEST(MatchInstances, IdenticalMapsMatchAtZero) {
  std::mt19937_64 rng(13);
  const InstanceLabelMap l = oracle::random_labels(12, 12, 4, rng);
  const auto r = matching::match_instances(l, l, 0.1);
  ASSERT_EQ(r.pairs.size(), static_cast<std::size_t>(l.max_label()));
  for (const auto& p : r.pairs) {
    EXPECT_EQ(p.teacher_id, p.student_id);
    EXPECT_EQ(p.distance, 0.0);
  }
}

TEST(MatchInstances, ThresholdArithmetic) {
  // disks of area ~50 have equivalent radius ~4; 10 px apart exceeds 1.5 * 4
  InstanceLabelMap t(40, 40), s(40, 40);
  square(t, 1, 5, 5, 7);
  square(s, 1, 5, 15, 7);
  const double rho = std::sqrt(49.0 / std::numbers::pi);
  ASSERT_GT(10.0, 1.5 * rho);
  const auto r = matching::match_instances(t, s, 1.5);
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.unmatched_teacher, std::vector<std::int32_t>{1});
  EXPECT_EQ(r.unmatched_student, std::vector<std::int32_t>{1});
  // 10 <= 3 * 3.95
  EXPECT_EQ(matching::match_instances(t, s, 3.0).pairs.size(), 1u);
  const auto cands = matching::match_candidates(t, s, 1.5);
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_FALSE(cands[0].kept);
  EXPECT_NEAR(cands[0].threshold, 1.5 * rho, 1e-12);
}

TEST(MatchInstances, HugeRadiusIsPureMunkres) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const InstanceLabelMap t = oracle::random_labels(12, 12, 4, rng);
    const InstanceLabelMap s = oracle::random_labels(12, 12, 4, rng);
    const auto r = matching::match_instances(t, s, 1e9);
    EXPECT_EQ(r.pairs.size(), static_cast<std::size_t>(std::min(t.max_label(), s.max_label())));
  }
}

TEST(MatchInstances, SymmetricUnderSwap) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const InstanceLabelMap t = oracle::random_labels(12, 12, 4, rng);
    const InstanceLabelMap s = oracle::random_labels(12, 12, 4, rng);
    const auto a = matching::match_instances(t, s, 1.5);
    const auto b = matching::match_instances(s, t, 1.5);
    double ca = 0.0, cb = 0.0;
    for (const auto& p : a.pairs) ca += p.distance;
    for (const auto& p : b.pairs) cb += p.distance;
    EXPECT_EQ(a.pairs.size(), b.pairs.size());
    EXPECT_NEAR(ca, cb, 1e-9);
  }
}

TEST(MatchInstances, RejectsNonPositiveFactor) {
  InstanceLabelMap l(4, 4);
  EXPECT_THROW(matching::match_instances(l, l, 0.0), std::invalid_argument);
}
