#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "asynclc/curve.hpp"
#include "asynclc/data_model.hpp"
#include "asynclc/estimators.hpp"

namespace asynclc {

enum class MultiplierLaw { Rademacher, StandardNormal };
enum class BandTarget { Beta, Gamma };

// K_{h1,h2}(T - t, S - t) (Y - R'rho) for every pair of every subject, from a
// one-step fit; per subject in (j, k) order.
std::vector<std::vector<double>> kernel_weighted_residuals(
    const LongitudinalDataset& dataset, const CoefficientEstimate& one_step_fit, double h1,
    double h2, KernelFamily family = KernelFamily::Epanechnikov);

// Subject contributions W^-1 s_i / n at one grid point, where s_i sums the
// target regressor times the kernel-weighted residual and W is the matching
// weight matrix (f_n for gamma, g_n for beta).
struct ScoreTerms {
  bool ok = false;
  std::vector<std::size_t> subjects;
  std::vector<Eigen::VectorXd> terms;
};

// One-step terms from precomputed residuals.
ScoreTerms one_step_terms(const LongitudinalDataset& dataset,
                          const std::vector<std::vector<double>>& residuals, double t, double h1,
                          double h2, BandTarget target,
                          KernelFamily family = KernelFamily::Epanechnikov);

// Sum of u_i * term_i in subject order.
Eigen::VectorXd combine_terms(const ScoreTerms& terms, std::span<const double> multipliers);

// Q_n(t) (gamma) or J_n(t) (beta) for the one-step fit.
Eigen::VectorXd q_hat(const LongitudinalDataset& dataset,
                      const std::vector<std::vector<double>>& residuals, double t, double h1,
                      double h2, BandTarget target,
                      KernelFamily family = KernelFamily::Epanechnikov);

struct ScoreProcess {
  std::size_t n_subjects = 0;
  std::vector<double> grid;
  std::vector<ScoreTerms> points;
};

// Terms at every grid point of a fitted curve, for any estimation method.
ScoreProcess score_process(const LongitudinalDataset& dataset, const CurveEstimate& curve,
                           BandTarget target);

// Multipliers for one bootstrap replicate; depends only on (seed, replicate).
std::vector<double> draw_multipliers(MultiplierLaw law, std::size_t n, std::uint64_t seed,
                                     std::size_t replicate);

struct BandOptions {
  std::size_t replicates = 1000;
  double alpha = 0.05;
  MultiplierLaw law = MultiplierLaw::Rademacher;
  std::uint64_t seed = 1;
  std::size_t coefficient = 0;  // basis contrast within the target block
  CurveFunction contrast;       // overrides `coefficient` when set
  bool unit_multipliers = false;
  std::size_t threads = 1;
};

struct ScbResult {
  std::vector<double> grid;
  std::vector<double> center;  // NaN where the fit failed
  double c_alpha = 0.0;
  double alpha = 0.05;
  std::size_t replicates = 0;
  std::vector<double> sup_stats;
  std::uint64_t seed = 0;

  double lower(std::size_t k) const { return center[k] - c_alpha; }
  double upper(std::size_t k) const { return center[k] + c_alpha; }
};

// The ceil((1 - alpha) B)-th smallest of the sup statistics.
double band_quantile(std::span<const double> sup_stats, double alpha);

ScbResult bootstrap_band(const LongitudinalDataset& dataset, const CurveEstimate& curve,
                         BandTarget target, const BandOptions& options);

// Same, reusing a prepared score process.
ScbResult bootstrap_band(const ScoreProcess& process, const CurveEstimate& curve,
                         BandTarget target, const BandOptions& options);

}  // namespace asynclc
