#include "asynclc/curve.hpp"

#include <cmath>

#include "asynclc/error.hpp"
#include "asynclc/parallel.hpp"

namespace asynclc {

const char* method_name(Method m) {
  switch (m) {
    case Method::OneStep: return "one-step";
    case Method::TwoStepCentering: return "two-step";
    case Method::TwoStepVCM: return "two-step-vcm";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "one-step") return Method::OneStep;
  if (name == "two-step" || name == "two-step-centering") return Method::TwoStepCentering;
  if (name == "two-step-vcm") return Method::TwoStepVCM;
  throw Error(ErrorCode::InvalidParameter, "unknown method '" + name + "'");
}

std::vector<double> uniform_grid(double from, double to, std::size_t count) {
  if (count == 0) throw Error(ErrorCode::InvalidParameter, "grid needs at least one point");
  if (count == 1) return {from};
  std::vector<double> g(count);
  for (std::size_t k = 0; k < count; ++k) {
    g[k] = from + (to - from) * static_cast<double>(k) / static_cast<double>(count - 1);
  }
  return g;
}

std::vector<double> default_grid() { return uniform_grid(0.05, 0.95, 181); }

std::vector<double> CurveEstimate::grid() const {
  std::vector<double> g;
  g.reserve(points.size());
  for (const auto& pt : points) g.push_back(pt.t);
  return g;
}

std::size_t CurveEstimate::ok_count() const {
  std::size_t c = 0;
  for (const auto& pt : points) c += pt.ok ? 1 : 0;
  return c;
}

namespace {

void check_bandwidths(Method method, const FitBandwidths& bw, std::size_t q) {
  if (method != Method::OneStep) require_bandwidth(bw.h, "h");
  if (method == Method::OneStep || q > 0) {
    require_bandwidth(bw.h1, "h1");
    require_bandwidth(bw.h2, "h2");
  }
}

}  // namespace

InterpolatedCurve first_stage_curve(const LongitudinalDataset& dataset, Method method, double h,
                                    const CenteredDataset* centered, KernelFamily family) {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;
  for (double t : uniform_grid(0.0, 1.0, 201)) {
    try {
      const CoefficientEstimate est = method == Method::TwoStepVCM
                                          ? fit_vcm(dataset, t, h, family)
                                          : fit_centering(*centered, t, h, family);
      times.push_back(t);
      values.push_back(est.block(Block::Beta));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularLocalFit && e.code() != ErrorCode::NoLocalData) throw;
    }
  }
  if (times.empty()) {
    throw Error(ErrorCode::EstimationFailed, "first-stage fit failed at every support point");
  }
  return InterpolatedCurve(std::move(times), std::move(values));
}

CurveFitter::CurveFitter(const LongitudinalDataset& dataset, Method method,
                         FitBandwidths bandwidths, KernelFamily family)
    : dataset_(&dataset), method_(method), bw_(bandwidths), family_(family) {
  check_bandwidths(method, bw_, dataset.q());
  if (method == Method::OneStep && dataset.q() == 0) {
    throw Error(ErrorCode::InvalidParameter, "one-step method needs asynchronous covariates");
  }
  if (method == Method::TwoStepCentering) {
    centered_ = std::make_shared<const CenteredDataset>(center(dataset, bw_.h, family));
  }
  if (method != Method::OneStep && dataset.q() > 0) {
    beta_curve_ = std::make_shared<const InterpolatedCurve>(
        first_stage_curve(dataset, method, bw_.h, centered_.get(), family));
  }
}

std::vector<std::string> CurveFitter::names() const {
  std::vector<std::string> out;
  if (method_ == Method::TwoStepVCM) out.push_back("alpha");
  for (std::size_t k = 0; k < dataset_->p(); ++k) out.push_back("beta" + std::to_string(k + 1));
  for (std::size_t k = 0; k < dataset_->q(); ++k) out.push_back("gamma" + std::to_string(k + 1));
  return out;
}

CoefficientEstimate CurveFitter::first_stage(double t) const {
  if (method_ == Method::TwoStepVCM) return fit_vcm(*dataset_, t, bw_.h, family_);
  return fit_centering(*centered_, t, bw_.h, family_);
}

CurveFitter::PointFit CurveFitter::fit(double t) const {
  PointFit out;
  out.point.t = t;
  try {
    if (method_ == Method::OneStep) {
      out.first = fit_one_step(*dataset_, t, bw_.h1, bw_.h2, family_);
      out.point.coef = out.first->coef;
      out.point.cov = out.first->cov;
      out.point.n_effective = out.first->n_effective;
    } else {
      out.first = first_stage(t);
      const auto& a = *out.first;
      const Eigen::Index na = a.coef.size();
      Eigen::Index nb = 0;
      if (dataset_->q() > 0) {
        const CurveFunction beta = [curve = beta_curve_](double s) { return (*curve)(s); };
        out.second = fit_gamma_second_step(*dataset_, beta, t, bw_.h1, bw_.h2, family_);
        nb = out.second->coef.size();
      }
      out.point.coef.resize(na + nb);
      out.point.cov = Eigen::MatrixXd::Zero(na + nb, na + nb);
      out.point.coef.head(na) = a.coef;
      out.point.cov.topLeftCorner(na, na) = a.cov;
      if (out.second) {
        out.point.coef.tail(nb) = out.second->coef;
        out.point.cov.bottomRightCorner(nb, nb) = out.second->cov;
      }
      out.point.n_effective = a.n_effective;
    }
    out.point.se = out.point.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.point.ok = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularLocalFit && e.code() != ErrorCode::NoLocalData) throw;
    out.point.ok = false;
    out.point.failure = std::string(error_code_name(e.code())) + ": " + e.what();
    out.first.reset();
    out.second.reset();
  }
  return out;
}

CurveEstimate CurveFitter::fit_curve(std::span<const double> grid, std::size_t threads) const {
  if (grid.empty()) throw Error(ErrorCode::InvalidParameter, "grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0 && grid[k] <= 1.0)) {
      throw Error(ErrorCode::InvalidParameter, "grid point outside [0,1]");
    }
    if (k > 0 && !(grid[k] > grid[k - 1])) {
      throw Error(ErrorCode::InvalidParameter, "grid must be strictly increasing");
    }
  }
  CurveEstimate out;
  out.method = method_;
  out.bandwidths = bw_;
  out.family = family_;
  out.p = dataset_->p();
  out.q = method_ == Method::OneStep || dataset_->q() > 0 ? dataset_->q() : 0;
  out.has_alpha = method_ == Method::TwoStepVCM;
  out.names = names();
  out.centered = centered_;
  out.beta_curve = beta_curve_;
  std::vector<PointFit> fits(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t k) { fits[k] = fit(grid[k]); });
  for (auto& f : fits) {
    out.points.push_back(std::move(f.point));
    out.first.push_back(std::move(f.first));
    out.second.push_back(std::move(f.second));
  }
  if (out.ok_count() == 0) {
    throw Error(ErrorCode::EstimationFailed,
                "local fit failed at every grid point: " + out.points.front().failure);
  }
  return out;
}

CurveEstimate fit_curve(const LongitudinalDataset& dataset, Method method,
                        std::span<const double> grid, FitBandwidths bandwidths,
                        KernelFamily family, std::size_t threads) {
  return CurveFitter(dataset, method, bandwidths, family).fit_curve(grid, threads);
}

}  // namespace asynclc
