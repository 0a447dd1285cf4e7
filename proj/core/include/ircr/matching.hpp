#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "ircr/tensor.hpp"

// Teacher/student instance correspondence: centroid distances, optimal
// assignment and the equivalent-radius acceptance test.
namespace ircr::matching {

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t rows, std::size_t cols, std::vector<double> w);
  DistanceMatrix(std::size_t rows, std::size_t cols) : DistanceMatrix(rows, cols, std::vector<double>(rows * cols, 0.0)) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return w_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return w_[i * cols_ + j]; }
  double max_entry() const noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> w_;
};

using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;

struct MatchedPair {
  std::int32_t teacher_id = 0;
  std::int32_t student_id = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::vector<std::int32_t> unmatched_teacher;
  std::vector<std::int32_t> unmatched_student;
};

/// Munkres assignment pair considered by match_instances, with its verdict.
struct Candidate {
  MatchedPair pair;
  double threshold = 0.0;
  bool kept = false;
};

/// w_ij = distance between centroids of teacher label i+1 and student label j+1.
DistanceMatrix distance_matrix(const InstanceLabelMap& teacher, const InstanceLabelMap& student);

/// Minimum-cost assignment of size min(n, m), sorted by row. Among equal-cost
/// optima the lexicographically smallest (row, col) sequence is returned.
Assignment munkres(const DistanceMatrix& w);

/// Total cost of an assignment, summed in row order.
double assignment_cost(const DistanceMatrix& w, const Assignment& a);

/// Munkres on centroid distances, then keep (i, j) iff w_ij <= r_factor * mean
/// equivalent radius sqrt(area/pi) of the two instances.
MatchResult match_instances(const InstanceLabelMap& teacher, const InstanceLabelMap& student,
                            double r_factor = 1.5);

/// Same as match_instances, but reports every assigned pair with its threshold.
std::vector<Candidate> match_candidates(const InstanceLabelMap& teacher, const InstanceLabelMap& student,
                                        double r_factor = 1.5);

}  // namespace ircr::matching
