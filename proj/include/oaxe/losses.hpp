#pragma once

// Cross entropy and its order-agnostic variants, evaluated on a matrix of
// per-position log-probabilities. Every loss is a per-token mean and returns
// the gradient with respect to the log-probability matrix itself; the caller
// owns the softmax Jacobian.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oaxe/assignment.hpp"
#include "oaxe/error.hpp"

namespace oaxe {

template <typename Scalar>
using LogProbMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using TargetSequence = std::vector<int>;

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  LogProbMatrix<Scalar> grad;
  Permutation ordering;
  std::vector<bool> kept;

  std::size_t kept_count() const {
    std::size_t k = 0;
    for (bool b : kept) k += b ? 1 : 0;
    return k;
  }
};

struct AnnealParams {
  double c = 16.0;
  double lambda = 0.95;
  int total_epochs = 100;  // M
  int epoch = 0;           // m

  void validate() const {
    if (!(c > 1.0)) throw Error(ErrorKind::Parameter, "anneal c must be > 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::Parameter, "anneal lambda must be in [0,1]");
    if (total_epochs < 0 || epoch < 0 || epoch > total_epochs) {
      throw Error(ErrorKind::Parameter, "anneal epoch must satisfy 0 <= m <= M");
    }
  }
};

// Cost matrices clamp log-probabilities here so potentials stay finite.
inline constexpr double kLogProbFloor = -30.0;

namespace detail {

template <typename Scalar>
void check_shapes(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target) {
  if (target.empty()) throw Error(ErrorKind::Shape, "target sequence must be non-empty");
  if (static_cast<std::size_t>(log_probs.rows()) != target.size()) {
    throw Error(ErrorKind::Shape, "log-prob rows (" + std::to_string(log_probs.rows()) +
                                      ") != target length (" + std::to_string(target.size()) + ")");
  }
  for (int tok : target) {
    if (tok < 0 || tok >= log_probs.cols()) {
      throw Error(ErrorKind::Vocabulary, "token id " + std::to_string(tok) + " outside vocabulary of " +
                                             std::to_string(log_probs.cols()));
    }
  }
}

// Mean negative log-likelihood of `aligned` over kept positions.
template <typename Scalar>
LossResult<Scalar> masked_xe(const LogProbMatrix<Scalar>& log_probs, std::span<const int> aligned,
                             std::vector<bool> kept, Permutation ordering) {
  LossResult<Scalar> out;
  out.grad = LogProbMatrix<Scalar>::Zero(log_probs.rows(), log_probs.cols());
  out.kept = std::move(kept);
  out.ordering = std::move(ordering);
  const std::size_t k = out.kept_count();
  if (k == 0) return out;
  double sum = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    if (!out.kept[i]) continue;
    sum -= static_cast<double>(log_probs(i, aligned[i]));
    out.grad(i, aligned[i]) = static_cast<Scalar>(-1.0 / static_cast<double>(k));
  }
  out.loss = sum / static_cast<double>(k);
  return out;
}

}  // namespace detail

template <typename Scalar>
LossResult<Scalar> xe_loss(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target) {
  detail::check_shapes(log_probs, target);
  return detail::masked_xe(log_probs, target, std::vector<bool>(target.size(), true),
                           identity_permutation(target.size()));
}

// cost(i, j) = -logP[i][target[j]]
template <typename Scalar>
CostMatrix build_cost_matrix(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target) {
  detail::check_shapes(log_probs, target);
  const std::size_t n = target.size();
  CostMatrix cost(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double lp = static_cast<double>(log_probs(i, target[j]));
      if (!(lp >= kLogProbFloor)) lp = kLogProbFloor;  // also catches NaN and -inf
      cost(i, j) = -lp;
    }
  }
  return cost;
}

// Best ordering of the target against the predictions: mapping[i] is the
// target index placed at position i.
template <typename Scalar>
Permutation best_ordering(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target) {
  return solve_assignment(build_cost_matrix(log_probs, target)).mapping;
}

inline TargetSequence reorder(std::span<const int> target, std::span<const int> ordering) {
  TargetSequence out(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) out[i] = target[ordering[i]];
  return out;
}

template <typename Scalar>
LossResult<Scalar> oaxe_loss(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target) {
  Permutation ordering = best_ordering(log_probs, target);
  const TargetSequence aligned = reorder(target, ordering);
  return detail::masked_xe(log_probs, std::span<const int>(aligned), std::vector<bool>(target.size(), true),
                           std::move(ordering));
}

// Positions whose aligned-token probability is <= margin are dropped.
template <typename Scalar>
LossResult<Scalar> oaxe_truncated_loss(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target,
                                       double margin) {
  if (!(margin >= 0.0 && margin < 1.0)) {
    throw Error(ErrorKind::Parameter, "truncation margin must be in [0,1), got " + std::to_string(margin));
  }
  Permutation ordering = best_ordering(log_probs, target);
  const TargetSequence aligned = reorder(target, ordering);
  std::vector<bool> kept(target.size());
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    kept[i] = std::exp(static_cast<double>(log_probs(i, aligned[i]))) > margin;
  }
  return detail::masked_xe(log_probs, std::span<const int>(aligned), std::move(kept), std::move(ordering));
}

inline double anneal_temperature(const AnnealParams& p) {
  p.validate();
  const double exponent = static_cast<double>(p.epoch) - p.lambda * static_cast<double>(p.total_epochs);
  return std::max(0.0, 1.0 - std::pow(p.c, exponent));
}

template <typename Scalar>
LossResult<Scalar> joint_loss(const LogProbMatrix<Scalar>& log_probs, std::span<const int> target,
                              double temperature) {
  if (!(temperature >= 0.0 && temperature <= 1.0)) {
    throw Error(ErrorKind::Parameter, "temperature must be in [0,1], got " + std::to_string(temperature));
  }
  LossResult<Scalar> xe = xe_loss(log_probs, target);
  LossResult<Scalar> out = oaxe_loss(log_probs, target);
  out.loss = temperature * xe.loss + (1.0 - temperature) * out.loss;
  out.grad = static_cast<Scalar>(temperature) * xe.grad + static_cast<Scalar>(1.0 - temperature) * out.grad;
  return out;
}

}  // namespace oaxe
