#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oaxe/assignment.hpp"

using namespace oaxe;

namespace {

CostMatrix random_matrix(std::mt19937_64& rng, std::size_t n, double lo = -10.0, double hi = 10.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  CostMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace

TEST(Assignment, IdentityIsOptimalForZeroDiagonal) {
  const auto cost = CostMatrix::from_rows({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}});
  const auto a = solve_assignment(cost);
  EXPECT_EQ(a.mapping, (Permutation{0, 1, 2}));
  EXPECT_EQ(a.total_cost, 0.0);
}

TEST(Assignment, ClassicThreeByThree) {
  // Optimum (0,2),(1,1),(2,0) = 3 + 4 + 3.
  const auto cost = CostMatrix::from_rows({{1, 2, 3}, {2, 4, 6}, {3, 6, 9}});
  const auto a = solve_assignment(cost);
  EXPECT_EQ(a.total_cost, 10.0);
  EXPECT_EQ(a.mapping, (Permutation{2, 1, 0}));
}

TEST(Assignment, RejectsNonFiniteAndEmpty) {
  auto cost = CostMatrix::from_rows({{0, 1}, {1, 0}});
  cost(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    solve_assignment(cost);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
  cost(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(solve_assignment(cost), Error);
  EXPECT_THROW(solve_assignment(CostMatrix(0)), Error);
  EXPECT_THROW(brute_force_assignment(CostMatrix(0)), Error);
}

TEST(Assignment, RejectsNonSquare) {
  EXPECT_THROW(CostMatrix(2, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(CostMatrix::from_rows({{1, 2}, {3}}), Error);
}

TEST(BruteForce, SingleElement) {
  const auto a = brute_force_assignment(CostMatrix::from_rows({{3.5}}));
  EXPECT_EQ(a.mapping, (Permutation{0}));
  EXPECT_EQ(a.total_cost, 3.5);
}

TEST(BruteForce, DiagonalOptimum) {
  const auto a = brute_force_assignment(CostMatrix::from_rows({{0, 1}, {1, 0}}));
  EXPECT_EQ(a.mapping, (Permutation{0, 1}));
  EXPECT_EQ(a.total_cost, 0.0);
}

TEST(BruteForce, SizeGuard) {
  std::mt19937_64 rng(3);
  EXPECT_NO_THROW(brute_force_assignment(random_matrix(rng, 8)));
  try {
    brute_force_assignment(random_matrix(rng, 10));
    FAIL() << "expected size-limit error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SizeLimit);
  }
}

TEST(Assignment, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(20210701);
  std::uniform_int_distribution<int> side(1, 7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto cost = random_matrix(rng, static_cast<std::size_t>(side(rng)));
    const auto fast = solve_assignment(cost);
    const auto slow = brute_force_assignment(cost);
    ASSERT_TRUE(is_permutation(fast.mapping));
    ASSERT_EQ(fast.total_cost, slow.total_cost) << "trial " << trial;
    ASSERT_EQ(fast.total_cost, assignment_cost(cost, fast.mapping));
  }
}

TEST(Assignment, FiveByFiveCrossCheck) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cost = random_matrix(rng, 5);
    EXPECT_EQ(solve_assignment(cost).total_cost, brute_force_assignment(cost).total_cost);
  }
}

TEST(Assignment, RowShiftChangesCostByConstantOnly) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> side(1, 6);
  std::uniform_real_distribution<double> shift(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(side(rng));
    const auto cost = random_matrix(rng, n);
    const auto base = brute_force_assignment(cost);
    auto shifted = cost;
    const std::size_t row = static_cast<std::size_t>(trial) % n;
    const double delta = shift(rng);
    for (std::size_t j = 0; j < n; ++j) shifted(row, j) += delta;
    const auto a = brute_force_assignment(shifted);
    const auto b = solve_assignment(shifted);
    EXPECT_NEAR(a.total_cost, base.total_cost + delta, 1e-9);
    EXPECT_NEAR(b.total_cost, base.total_cost + delta, 1e-9);
    // The original optimum is still optimal after the shift.
    EXPECT_NEAR(assignment_cost(shifted, base.mapping), a.total_cost, 1e-9);
  }
}

TEST(Assignment, DuplicateColumnsGiveUniqueCost) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    auto cost = random_matrix(rng, 6);
    for (std::size_t i = 0; i < 6; ++i) cost(i, 4) = cost(i, 1);
    const auto fast = solve_assignment(cost);
    const auto slow = brute_force_assignment(cost);
    EXPECT_NEAR(fast.total_cost, slow.total_cost, 1e-12);
    // Swapping the two identical columns is another optimum with the same cost.
    auto swapped = fast.mapping;
    for (int& j : swapped) j = j == 1 ? 4 : j == 4 ? 1 : j;
    EXPECT_NEAR(assignment_cost(cost, swapped), fast.total_cost, 1e-12);
  }
}

TEST(Assignment, LargeMatrixProducesPermutation) {
  std::mt19937_64 rng(23);
  const auto cost = random_matrix(rng, 120);
  const auto a = solve_assignment(cost);
  EXPECT_TRUE(is_permutation(a.mapping));
  // Cannot be beaten by any single pairwise swap.
  for (std::size_t i = 0; i < 120; ++i) {
    for (std::size_t k = i + 1; k < 120; ++k) {
      const double now = cost(i, a.mapping[i]) + cost(k, a.mapping[k]);
      const double swapped = cost(i, a.mapping[k]) + cost(k, a.mapping[i]);
      ASSERT_GE(swapped, now - 1e-9);
    }
  }
}
