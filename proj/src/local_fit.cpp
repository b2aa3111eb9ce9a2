#include "asynclc/local_fit.hpp"

#include <sstream>

namespace asynclc::detail {

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& normal, double t, const char* what,
                                ErrorCode code) {
  const auto dim = normal.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
  const double mean_diag = normal.trace() / static_cast<double>(dim);
  const double smallest = eig.eigenvalues().minCoeff();
  if (eig.info() != Eigen::Success || !(mean_diag > 0.0) ||
      !(smallest >= kSingularityRatio * mean_diag)) {
    std::ostringstream msg;
    msg << what << ": singular local design at t=" << t << " (min eigenvalue " << smallest
        << ", mean diagonal " << mean_diag << "); try larger bandwidths";
    throw Error(code, msg.str());
  }
  const Eigen::VectorXd inv_eval = eig.eigenvalues().cwiseInverse();
  Eigen::MatrixXd inv = eig.eigenvectors() * inv_eval.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

void finalize_solution(LocalSolution& sol, const Eigen::VectorXd& rhs, double t,
                       const char* what) {
  sol.normal_inv = checked_inverse(sol.normal, t, what);
  sol.theta = sol.normal.ldlt().solve(rhs);
}

void rescale(LocalSolution& sol, const Eigen::VectorXd& factors) {
  sol.theta = sol.theta.cwiseProduct(factors);
  sol.cov = factors.asDiagonal() * sol.cov * factors.asDiagonal();
}

}  // namespace asynclc::detail
