#pragma once

// Minimum-cost perfect matching on square cost matrices.
//
// solve_assignment is a shortest augmenting path Hungarian method with row and
// column potentials (Jonker-Volgenant style), O(n^3). brute_force_assignment
// enumerates all n! permutations and exists as a test oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oaxe/error.hpp"

namespace oaxe {

class CostMatrix {
 public:
  CostMatrix() = default;

  explicit CostMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  CostMatrix(std::size_t n, std::vector<double> row_major) : n_(n), data_(std::move(row_major)) {
    if (data_.size() != n_ * n_) {
      throw Error(ErrorKind::Shape, "cost matrix is not square: " + std::to_string(data_.size()) +
                                        " entries for side " + std::to_string(n_));
    }
  }

  static CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    std::vector<double> flat;
    flat.reserve(n * n);
    for (const auto& row : rows) {
      if (row.size() != n) throw Error(ErrorKind::Shape, "cost matrix rows must have length n");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return CostMatrix(n, std::move(flat));
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<const double> data() const noexcept { return data_; }

  void validate() const {
    if (n_ == 0) throw Error(ErrorKind::InvalidInput, "cost matrix must have n >= 1");
    for (double c : data_) {
      if (!std::isfinite(c)) throw Error(ErrorKind::InvalidInput, "cost matrix has a non-finite entry");
    }
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// mapping[i] = column assigned to row i.
using Permutation = std::vector<int>;

inline bool is_permutation(std::span<const int> mapping) {
  std::vector<char> seen(mapping.size(), 0);
  for (int j : mapping) {
    if (j < 0 || static_cast<std::size_t>(j) >= mapping.size() || seen[j]) return false;
    seen[j] = 1;
  }
  return true;
}

inline Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

// Sum in row order; both solvers report costs through this so equal
// permutations give bit-identical totals.
inline double assignment_cost(const CostMatrix& cost, std::span<const int> mapping) {
  double total = 0.0;
  for (std::size_t i = 0; i < mapping.size(); ++i) total += cost(i, mapping[i]);
  return total;
}

struct Assignment {
  Permutation mapping;
  double total_cost = 0.0;
};

inline Assignment solve_assignment(const CostMatrix& cost) {
  cost.validate();
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();

  // 1-based with a virtual column 0 holding the row being inserted.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t col = 0;
    std::fill(min_slack.begin(), min_slack.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col] = 1;
      const std::size_t row = row_of[col];
      const std::span<const double> c = cost.row(row - 1);
      double delta = inf;
      std::size_t next = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = c[j - 1] - u[row] - v[j];
        if (reduced < min_slack[j]) {
          min_slack[j] = reduced;
          way[j] = col;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          next = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col = next;
    } while (row_of[col] != 0);
    // Flip the alternating path back to the virtual column.
    do {
      const std::size_t prev = way[col];
      row_of[col] = row_of[prev];
      col = prev;
    } while (col != 0);
  }

  Assignment result;
  result.mapping.assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) result.mapping[row_of[j] - 1] = static_cast<int>(j - 1);
  result.total_cost = assignment_cost(cost, result.mapping);
  return result;
}

inline constexpr std::size_t kBruteForceMaxSide = 9;

inline Assignment brute_force_assignment(const CostMatrix& cost) {
  cost.validate();
  if (cost.size() > kBruteForceMaxSide) {
    throw Error(ErrorKind::SizeLimit, "brute force assignment limited to n <= 9, got n = " +
                                          std::to_string(cost.size()));
  }
  Permutation perm = identity_permutation(cost.size());
  Assignment best{perm, assignment_cost(cost, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double c = assignment_cost(cost, perm);
    if (c < best.total_cost) best = {perm, c};
  }
  return best;
}

}  // namespace oaxe
