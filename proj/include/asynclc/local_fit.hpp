#pragma once

// Kernel-weighted least squares with a subject-clustered sandwich covariance.
// Shared by every local estimator; rows are supplied by a visitor that calls
// emit(subject, weight, row, response) for each nonzero-weight term, in a
// fixed order (subjects ascending).

#include <Eigen/Dense>
#include <cstddef>
#include <limits>
#include <string>

#include "asynclc/error.hpp"

namespace asynclc::detail {

struct LocalSolution {
  Eigen::VectorXd theta;
  Eigen::MatrixXd normal;      // sum of w r r^T
  Eigen::MatrixXd normal_inv;
  Eigen::MatrixXd cov;         // sandwich
  std::size_t n_effective = 0;
};

// Smallest eigenvalue must reach 1e-10 times the mean diagonal.
constexpr double kSingularityRatio = 1e-10;

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& normal, double t, const char* what,
                                ErrorCode code = ErrorCode::SingularLocalFit);

void finalize_solution(LocalSolution& sol, const Eigen::VectorXd& rhs, double t,
                       const char* what);

// Rescales derivative coordinates: theta_k *= factor_k, cov -> D cov D.
void rescale(LocalSolution& sol, const Eigen::VectorXd& factors);

// bread^-1 (sum_i s_i s_i^T) bread^-1 with s_i the subject's weighted score at theta.
template <class Visit>
Eigen::MatrixXd sandwich_cov(std::size_t dim, Visit&& visit, const Eigen::VectorXd& theta,
                             const Eigen::MatrixXd& normal_inv) {
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(dim);
  std::size_t current = std::numeric_limits<std::size_t>::max();
  visit([&](std::size_t subject, double w, const Eigen::VectorXd& row, double y) {
    if (subject != current) {
      if (current != std::numeric_limits<std::size_t>::max()) {
        meat.selfadjointView<Eigen::Lower>().rankUpdate(score);
      }
      score.setZero();
      current = subject;
    }
    score.noalias() += (w * (y - row.dot(theta))) * row;
  });
  if (current != std::numeric_limits<std::size_t>::max()) {
    meat.selfadjointView<Eigen::Lower>().rankUpdate(score);
  }
  meat = meat.selfadjointView<Eigen::Lower>();
  Eigen::MatrixXd cov = normal_inv * meat * normal_inv;
  return 0.5 * (cov + cov.transpose());
}

template <class Visit>
LocalSolution solve_weighted(std::size_t dim, double t, Visit&& visit, const char* what) {
  LocalSolution sol;
  sol.normal = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  std::size_t count = 0;
  visit([&](std::size_t, double w, const Eigen::VectorXd& row, double y) {
    sol.normal.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
    rhs.noalias() += (w * y) * row;
    ++count;
  });
  if (count == 0) {
    throw Error(ErrorCode::NoLocalData,
                std::string(what) + ": no observations with positive kernel weight at t=" +
                    std::to_string(t));
  }
  sol.normal = sol.normal.selfadjointView<Eigen::Lower>();
  sol.n_effective = count;
  finalize_solution(sol, rhs, t, what);

  sol.cov = sandwich_cov(dim, visit, sol.theta, sol.normal_inv);
  return sol;
}

}  // namespace asynclc::detail
