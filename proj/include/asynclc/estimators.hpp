#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "asynclc/data_model.hpp"
#include "asynclc/kernels.hpp"

namespace asynclc {

enum class Block { Alpha, Beta, Gamma, AlphaDot, BetaDot, GammaDot };

// Where each named block lives inside a raw local solution vector.
struct BlockRange {
  Block block;
  std::size_t offset;
  std::size_t size;
};

struct DesignLayout {
  std::vector<BlockRange> blocks;

  std::size_t dim() const;
  std::optional<BlockRange> find(Block b) const;

  static DesignLayout one_step(std::size_t p, std::size_t q);  // beta, beta', gamma, gamma'
  static DesignLayout centering(std::size_t p);                // beta, beta'
  static DesignLayout vcm(std::size_t p);                      // alpha, beta, alpha', beta'
  static DesignLayout second_step(std::size_t q);              // gamma, gamma'
};

// A local fit at one evaluation time. `solution` and `full_cov` follow `layout`
// (derivatives in natural time units); coef/deriv/cov are the value blocks.
struct CoefficientEstimate {
  double t = 0.0;
  DesignLayout layout;
  Eigen::VectorXd solution;
  Eigen::MatrixXd full_cov;
  Eigen::VectorXd coef;    // alpha (if any), beta (if any), gamma (if any)
  Eigen::VectorXd deriv;   // same block order as coef
  Eigen::MatrixXd cov;     // sandwich covariance of coef
  std::size_t n_effective = 0;

  Eigen::VectorXd block(Block b) const;
  Eigen::MatrixXd block_cov(Block b) const;
  Eigen::VectorXd block_se(Block b) const;
};

using CurveFunction = std::function<Eigen::VectorXd(double)>;

// Piecewise-linear interpolant over fitted grid values; constant beyond the ends.
class InterpolatedCurve {
 public:
  InterpolatedCurve(std::vector<double> times, std::vector<Eigen::VectorXd> values);

  Eigen::VectorXd operator()(double t) const;
  const std::vector<double>& times() const { return times_; }
  const std::vector<Eigen::VectorXd>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<Eigen::VectorXd> values_;
};

enum class MeanTarget { Response, Covariates };

// Kernel-weighted average of responses (size-1 result) or of each sync covariate.
Eigen::VectorXd nw_mean(const LongitudinalDataset& dataset, double t, double h, MeanTarget target,
                        KernelFamily family = KernelFamily::Epanechnikov);

CenteredDataset center(const LongitudinalDataset& dataset, double h,
                       KernelFamily family = KernelFamily::Epanechnikov);

CoefficientEstimate fit_one_step(const LongitudinalDataset& dataset, double t, double h1,
                                 double h2, KernelFamily family = KernelFamily::Epanechnikov);

CoefficientEstimate fit_centering(const CenteredDataset& centered, double t, double h,
                                  KernelFamily family = KernelFamily::Epanechnikov);

CoefficientEstimate fit_vcm(const LongitudinalDataset& dataset, double t, double h,
                            KernelFamily family = KernelFamily::Epanechnikov);

CoefficientEstimate fit_gamma_second_step(const LongitudinalDataset& dataset,
                                          const CurveFunction& beta, double t, double h1,
                                          double h2,
                                          KernelFamily family = KernelFamily::Epanechnikov);

// Column selector for normalize_longitudinal.
struct ColumnSelector {
  enum class Process { Sync, Async } process = Process::Sync;
  std::size_t index = 0;
  // Time-invariant column: standardize with the cross-subject mean/SD of each
  // subject's first recorded value.
  bool baseline = false;
};

LongitudinalDataset normalize_longitudinal(const LongitudinalDataset& dataset, double h,
                                           ColumnSelector column,
                                           KernelFamily family = KernelFamily::Epanechnikov);

struct ConstantFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_se;
  Eigen::MatrixXd beta_cov;
  Eigen::VectorXd gamma;
  Eigen::VectorXd gamma_se;
  Eigen::MatrixXd gamma_cov;
};

// Pooled least squares of centered responses on centered sync covariates.
ConstantFit fit_constant_beta(const CenteredDataset& centered);

// Pooled least squares of partial residuals Y - X'beta(T) on Z(S) over all
// pairs, weighted by K_h(T - S).
ConstantFit fit_constant_gamma(const LongitudinalDataset& dataset, const CurveFunction& beta,
                               double pair_bandwidth,
                               KernelFamily family = KernelFamily::Epanechnikov);

struct ConstantBlocks {
  bool beta = true;
  bool gamma = true;
};

// Constant beta and/or gamma. When beta is not constant, `beta_curve` must be given.
ConstantFit fit_constant_coefficients(const CenteredDataset& centered, ConstantBlocks which,
                                      double pair_bandwidth,
                                      const CurveFunction* beta_curve = nullptr,
                                      KernelFamily family = KernelFamily::Epanechnikov);

}  // namespace asynclc
