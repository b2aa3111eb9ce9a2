#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "asynclc/curve.hpp"
#include "asynclc/data_model.hpp"
#include "asynclc/kernels.hpp"
#include "asynclc/rng.hpp"
#include "asynclc/scb.hpp"

namespace asynclc {

enum class Setting { I, II, Custom };

const char* setting_name(Setting s);  // "i", "ii", "custom"
Setting parse_setting(const std::string& name);

using ScalarFunction = std::function<double(double)>;

// One scalar X and one scalar Z per subject, as in the simulation study.
struct DgpConfig {
  std::size_t n = 400;
  double obs_rate = 5.0;  // L_i, M_i ~ Poisson(obs_rate) + 1
  Setting setting = Setting::I;
  ScalarFunction beta;   // used when setting == Custom
  ScalarFunction gamma;
  bool z_time_constant = false;  // Z_i(t) = one N(0, 1) draw per subject
  double noise_scale = 1.0;      // multiplies the error process
  std::uint64_t seed = 1;

  double beta_at(double t) const;
  double gamma_at(double t) const;
  void check() const;
};

struct GpSample {
  Eigen::VectorXd values;
  bool jittered = false;  // tied times forced a 1e-12 diagonal jitter
};

GpSample sample_gp(std::span<const double> times, const ScalarFunction& mean_fn,
                   const std::function<double(double, double)>& cov_fn, Rng& rng);

LongitudinalDataset generate_dataset(const DgpConfig& cfg, Rng& rng);

// Dataset for replicate `replicate` of a study seeded with cfg.seed.
LongitudinalDataset generate_replicate(const DgpConfig& cfg, std::size_t replicate);

struct EstimatorSpec {
  std::string label;  // filled by describe() when empty
  Method method = Method::TwoStepCentering;
  Bandwidth h = Bandwidth::rule(0.6);
  Bandwidth h1 = Bandwidth::rule(0.5);
  Bandwidth h2 = Bandwidth::rule(0.5);
  bool scb = false;
  bool auto_bandwidth = false;  // cross-validate every replicate with the default plans

  std::string describe() const;
  FitBandwidths resolve(std::size_t n) const;
};

struct McConfig {
  std::size_t replicates = 200;
  std::vector<EstimatorSpec> estimators;
  std::vector<double> eval_times{0.3, 0.6, 0.9};
  std::vector<double> grid = default_grid();
  bool curve_metrics = true;  // RASE and simultaneous coverage over `grid`
  std::size_t scb_replicates = 500;
  double alpha = 0.05;
  MultiplierLaw law = MultiplierLaw::Rademacher;
  std::uint64_t seed = 1;
  std::size_t threads = 0;

  // Test hooks.
  bool use_truth = false;  // replace every estimate by the true curve
  double se_scale = 1.0;   // multiply every standard error before coverage checks

  void check() const;
};

struct PointSummary {
  std::string estimator;
  std::string coefficient;  // "beta" or "gamma"
  double t = 0.0;
  double bias = 0.0;  // signed mean of estimate - truth
  double sd = 0.0;
  double mean_se = 0.0;
  double cp = 0.0;  // percent
  double bias_mcse = 0.0;
  std::size_t count = 0;
};

struct CurveSummary {
  std::string estimator;
  std::string coefficient;
  double rase_mean = 0.0;
  double rase_sd = 0.0;
  double ci_coverage = 0.0;   // percent of replicates whose pointwise CIs all cover
  double scb_coverage = 0.0;  // NaN when no band was requested
  std::size_t count = 0;
};

struct EstimatorFailures {
  std::string estimator;
  std::size_t failures = 0;
  std::vector<std::string> messages;  // first few, for diagnostics
};

struct SimulationReport {
  std::size_t n = 0;
  Setting setting = Setting::I;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::vector<PointSummary> points;
  std::vector<CurveSummary> curves;
  std::vector<EstimatorFailures> failures;
  std::vector<std::string> warnings;

  const PointSummary* find_point(const std::string& estimator, const std::string& coefficient,
                                 double t) const;
  const CurveSummary* find_curve(const std::string& estimator,
                                 const std::string& coefficient) const;
};

SimulationReport run_monte_carlo(const McConfig& mc, const DgpConfig& dgp);

// sqrt(mean over the grid of (estimate - truth)^2) for one coefficient of a curve.
double rase(const CurveEstimate& curve, std::size_t coef_index, const ScalarFunction& truth);
double rase(std::span<const double> estimates, std::span<const double> truth);

}  // namespace asynclc
