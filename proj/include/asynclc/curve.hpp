#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asynclc/data_model.hpp"
#include "asynclc/estimators.hpp"
#include "asynclc/kernels.hpp"

namespace asynclc {

enum class Method { OneStep, TwoStepCentering, TwoStepVCM };

const char* method_name(Method m);  // "one-step", "two-step", "two-step-vcm"
Method parse_method(const std::string& name);

// h drives the first stage of the two-step methods; h1/h2 the bivariate kernel.
struct FitBandwidths {
  double h = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
};

constexpr double kPointwiseZ = 1.96;

std::vector<double> uniform_grid(double from, double to, std::size_t count);
std::vector<double> default_grid();  // 181 points on [0.05, 0.95]

struct CurvePoint {
  double t = 0.0;
  bool ok = false;
  std::string failure;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::MatrixXd cov;
  std::size_t n_effective = 0;

  double ci_lower(std::size_t k) const { return coef(k) - kPointwiseZ * se(k); }
  double ci_upper(std::size_t k) const { return coef(k) + kPointwiseZ * se(k); }
};

struct CurveEstimate {
  Method method = Method::OneStep;
  FitBandwidths bandwidths;
  KernelFamily family = KernelFamily::Epanechnikov;
  std::size_t p = 0;
  std::size_t q = 0;
  bool has_alpha = false;
  std::vector<std::string> names;  // coefficient labels in coef order
  std::vector<CurvePoint> points;

  // Stage fits retained for the wild bootstrap.
  std::vector<std::optional<CoefficientEstimate>> first;
  std::vector<std::optional<CoefficientEstimate>> second;
  std::shared_ptr<const CenteredDataset> centered;
  std::shared_ptr<const InterpolatedCurve> beta_curve;

  std::vector<double> grid() const;
  std::size_t ok_count() const;
  std::size_t beta_index(std::size_t k) const { return (has_alpha ? 1 : 0) + k; }
  std::size_t gamma_index(std::size_t k) const { return (has_alpha ? 1 : 0) + p + k; }
};

// Prepares the per-dataset state (centering, first-stage beta curve) once and
// then fits at arbitrary evaluation times.
class CurveFitter {
 public:
  struct PointFit {
    CurvePoint point;
    std::optional<CoefficientEstimate> first;
    std::optional<CoefficientEstimate> second;
  };

  CurveFitter(const LongitudinalDataset& dataset, Method method, FitBandwidths bandwidths,
              KernelFamily family = KernelFamily::Epanechnikov);

  PointFit fit(double t) const;
  CurveEstimate fit_curve(std::span<const double> grid, std::size_t threads = 1) const;

  const LongitudinalDataset& dataset() const { return *dataset_; }
  const std::shared_ptr<const CenteredDataset>& centered() const { return centered_; }
  const std::shared_ptr<const InterpolatedCurve>& beta_curve() const { return beta_curve_; }
  std::vector<std::string> names() const;

 private:
  const LongitudinalDataset* dataset_;
  Method method_;
  FitBandwidths bw_;
  KernelFamily family_;
  std::shared_ptr<const CenteredDataset> centered_;
  std::shared_ptr<const InterpolatedCurve> beta_curve_;

  CoefficientEstimate first_stage(double t) const;
};

// First-stage curve on a uniform 201-point grid over [0, 1]; failed points
// are skipped. Throws EstimationFailed when every point fails.
InterpolatedCurve first_stage_curve(const LongitudinalDataset& dataset, Method method, double h,
                                    const CenteredDataset* centered,
                                    KernelFamily family = KernelFamily::Epanechnikov);

// Grid must be nonempty, strictly increasing and inside [0, 1]. Failed grid
// points are flagged; throws EstimationFailed if all fail.
CurveEstimate fit_curve(const LongitudinalDataset& dataset, Method method,
                        std::span<const double> grid, FitBandwidths bandwidths,
                        KernelFamily family = KernelFamily::Epanechnikov,
                        std::size_t threads = 1);

}  // namespace asynclc
