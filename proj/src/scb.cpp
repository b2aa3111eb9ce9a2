#include "asynclc/scb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asynclc/error.hpp"
#include "asynclc/local_fit.hpp"
#include "asynclc/parallel.hpp"
#include "asynclc/rng.hpp"

namespace asynclc {

namespace {

constexpr std::uint64_t kMultiplierTag = 0x5cb;

// emit(subject, weight, regressor, weighted_residual); subjects ascending.
template <class Visit>
ScoreTerms build_terms(std::size_t n, std::size_t dim, double t, Visit&& visit) {
  ScoreTerms out;
  Eigen::MatrixXd weight = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<Eigen::VectorXd> scores;
  std::size_t current = std::numeric_limits<std::size_t>::max();
  std::size_t count = 0;
  visit([&](std::size_t subject, double w, const Eigen::VectorXd& x, double rhat) {
    weight.selfadjointView<Eigen::Lower>().rankUpdate(x, w);
    if (subject != current) {
      out.subjects.push_back(subject);
      scores.push_back(Eigen::VectorXd::Zero(dim));
      current = subject;
    }
    scores.back() += rhat * x;
    ++count;
  });
  if (count == 0) {
    throw Error(ErrorCode::NoLocalData, "bootstrap: no local data at t=" + std::to_string(t));
  }
  const double nn = static_cast<double>(n);
  weight = weight.selfadjointView<Eigen::Lower>();
  weight /= nn;
  const Eigen::MatrixXd inv = detail::checked_inverse(weight, t, "bootstrap weight matrix");
  out.terms.reserve(scores.size());
  for (const auto& s : scores) out.terms.push_back((inv * s) / nn);
  out.ok = true;
  return out;
}

void check_target(const CurveEstimate& curve, BandTarget target) {
  if (target == BandTarget::Gamma && curve.q == 0) {
    throw Error(ErrorCode::InvalidParameter, "curve has no asynchronous coefficients");
  }
}

ScoreTerms terms_at(const LongitudinalDataset& dataset, const CurveEstimate& curve,
                    BandTarget target, std::size_t k) {
  const double t = curve.points[k].t;
  const auto& bw = curve.bandwidths;
  const auto family = curve.family;
  const std::size_t n = dataset.size();
  const std::size_t p = dataset.p();
  const std::size_t q = dataset.q();

  if (curve.method == Method::OneStep) {
    const auto residuals = kernel_weighted_residuals(dataset, *curve.first[k], bw.h1, bw.h2, family);
    return one_step_terms(dataset, residuals, t, bw.h1, bw.h2, target, family);
  }

  if (target == BandTarget::Beta) {
    const CoefficientEstimate& fit = *curve.first[k];
    const bool vcm = curve.method == Method::TwoStepVCM;
    const Eigen::VectorXd theta = fit.solution;
    return build_terms(n, p, t, [&](auto&& emit) {
      Eigen::VectorXd x(p);
      Eigen::VectorXd row(theta.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = dataset.subject(i);
        for (std::size_t j = 0; j < s.sync_count(); ++j) {
          const double d = s.sync_times[j] - t;
          const double w = eval_scaled_uni(family, bw.h, d);
          if (w == 0.0) continue;
          double y;
          if (vcm) {
            x = s.sync_covariates.row(j).transpose();
            row << 1.0, x, d, x * d;
            y = s.responses[j];
          } else {
            x = curve.centered->centered_x[i].row(j).transpose();
            row << x, x * d;
            y = curve.centered->centered_y[i][j];
          }
          emit(i, w, x, w * (y - row.dot(theta)));
        }
      }
    });
  }

  const CoefficientEstimate& fit = *curve.second[k];
  const Eigen::VectorXd phi = fit.solution;
  const auto& beta = *curve.beta_curve;
  return build_terms(n, q, t, [&](auto&& emit) {
    Eigen::VectorXd z(q);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = dataset.subject(i);
      for (std::size_t j = 0; j < s.sync_count(); ++j) {
        const double d1 = s.sync_times[j] - t;
        if (!(std::fabs(d1) < bw.h1)) continue;
        const double partial = s.responses[j] - s.sync_covariates.row(j).dot(beta(s.sync_times[j]));
        for (std::size_t kk = 0; kk < s.async_count(); ++kk) {
          const double d2 = s.async_times[kk] - t;
          const double w = eval_scaled_bi(family, bw.h1, bw.h2, d1, d2);
          if (w == 0.0) continue;
          z = s.async_covariates.row(kk).transpose();
          const double fitted = z.dot(phi.head(q)) + d2 * z.dot(phi.tail(q));
          emit(i, w, z, w * (partial - fitted));
        }
      }
    }
  });
}

}  // namespace

std::vector<std::vector<double>> kernel_weighted_residuals(const LongitudinalDataset& dataset,
                                                           const CoefficientEstimate& fit,
                                                           double h1, double h2,
                                                           KernelFamily family) {
  const std::size_t p = dataset.p();
  const std::size_t q = dataset.q();
  const double t = fit.t;
  const Eigen::VectorXd& rho = fit.solution;
  if (static_cast<std::size_t>(rho.size()) != 2 * (p + q)) {
    throw Error(ErrorCode::InvalidParameter, "residuals need a one-step fit");
  }
  std::vector<std::vector<double>> out(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.subject(i);
    out[i].assign(s.sync_count() * s.async_count(), 0.0);
    for (const auto& pr : pairs(s)) {
      const double d1 = pr.sync_time - t;
      const double d2 = pr.async_time - t;
      const double w = eval_scaled_bi(family, h1, h2, d1, d2);
      if (w == 0.0) continue;
      const double fitted = pr.x.dot(rho.segment(0, p)) + d1 * pr.x.dot(rho.segment(p, p)) +
                            pr.z.dot(rho.segment(2 * p, q)) +
                            d2 * pr.z.dot(rho.segment(2 * p + q, q));
      out[i][pr.j * s.async_count() + pr.k] = w * (pr.response - fitted);
    }
  }
  return out;
}

ScoreTerms one_step_terms(const LongitudinalDataset& dataset,
                          const std::vector<std::vector<double>>& residuals, double t, double h1,
                          double h2, BandTarget target, KernelFamily family) {
  const std::size_t dim = target == BandTarget::Gamma ? dataset.q() : dataset.p();
  return build_terms(dataset.size(), dim, t, [&](auto&& emit) {
    Eigen::VectorXd x(dim);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.subject(i);
      for (const auto& pr : pairs(s)) {
        const double w = eval_scaled_bi(family, h1, h2, pr.sync_time - t, pr.async_time - t);
        if (w == 0.0) continue;
        x = target == BandTarget::Gamma ? pr.z.transpose() : pr.x.transpose();
        emit(i, w, x, residuals[i][pr.j * s.async_count() + pr.k]);
      }
    }
  });
}

Eigen::VectorXd combine_terms(const ScoreTerms& terms, std::span<const double> multipliers) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(terms.terms.empty() ? 0 : terms.terms[0].size());
  for (std::size_t r = 0; r < terms.subjects.size(); ++r) {
    acc += multipliers[terms.subjects[r]] * terms.terms[r];
  }
  return acc;
}

Eigen::VectorXd q_hat(const LongitudinalDataset& dataset,
                      const std::vector<std::vector<double>>& residuals, double t, double h1,
                      double h2, BandTarget target, KernelFamily family) {
  const ScoreTerms terms = one_step_terms(dataset, residuals, t, h1, h2, target, family);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(terms.terms.empty() ? 0 : terms.terms[0].size());
  for (const auto& term : terms.terms) acc += term;
  return acc;
}

ScoreProcess score_process(const LongitudinalDataset& dataset, const CurveEstimate& curve,
                           BandTarget target) {
  check_target(curve, target);
  ScoreProcess out;
  out.n_subjects = dataset.size();
  out.grid = curve.grid();
  out.points.resize(curve.points.size());
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    if (!curve.points[k].ok) continue;
    try {
      out.points[k] = terms_at(dataset, curve, target, k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularLocalFit && e.code() != ErrorCode::NoLocalData) throw;
      out.points[k] = ScoreTerms{};
    }
  }
  return out;
}

std::vector<double> draw_multipliers(MultiplierLaw law, std::size_t n, std::uint64_t seed,
                                     std::size_t replicate) {
  Rng rng = make_rng(seed, replicate, kMultiplierTag);
  std::vector<double> u(n);
  if (law == MultiplierLaw::Rademacher) {
    for (auto& v : u) v = (rng() >> 63) ? 1.0 : -1.0;
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : u) v = normal(rng);
  }
  return u;
}

double band_quantile(std::span<const double> sup_stats, double alpha) {
  if (sup_stats.empty()) throw Error(ErrorCode::InvalidParameter, "no bootstrap statistics");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "alpha must lie in (0,1)");
  }
  std::vector<double> sorted(sup_stats.begin(), sup_stats.end());
  std::sort(sorted.begin(), sorted.end());
  const double B = static_cast<double>(sorted.size());
  // Guard so that e.g. 0.95 * 500 lands on 475, not 476.
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * B - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

ScbResult bootstrap_band(const LongitudinalDataset& dataset, const CurveEstimate& curve,
                         BandTarget target, const BandOptions& options) {
  if (options.replicates < 100) {
    throw Error(ErrorCode::InvalidParameter, "bootstrap needs B >= 100");
  }
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "alpha must lie in (0,1)");
  }
  return bootstrap_band(score_process(dataset, curve, target), curve, target, options);
}

ScbResult bootstrap_band(const ScoreProcess& process, const CurveEstimate& curve,
                         BandTarget target, const BandOptions& options) {
  if (options.replicates < 100) {
    throw Error(ErrorCode::InvalidParameter, "bootstrap needs B >= 100");
  }
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "alpha must lie in (0,1)");
  }
  check_target(curve, target);
  const std::size_t dim = target == BandTarget::Gamma ? curve.q : curve.p;
  if (!options.contrast && options.coefficient >= dim) {
    throw Error(ErrorCode::InvalidParameter, "band coefficient index out of range");
  }
  const std::size_t offset = target == BandTarget::Gamma ? curve.gamma_index(0) : curve.beta_index(0);
  const std::size_t G = curve.points.size();

  ScbResult out;
  out.grid = curve.grid();
  out.center.assign(G, std::numeric_limits<double>::quiet_NaN());
  out.alpha = options.alpha;
  out.replicates = options.replicates;
  out.seed = options.seed;

  // Scalar contrast of every subject term, per usable grid point.
  struct Projected {
    std::vector<std::size_t> subjects;
    std::vector<double> values;
  };
  std::vector<Projected> projected;
  for (std::size_t k = 0; k < G; ++k) {
    const auto& pt = curve.points[k];
    if (!pt.ok || !process.points[k].ok) continue;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(dim);
    if (options.contrast) {
      a = options.contrast(pt.t);
      if (static_cast<std::size_t>(a.size()) != dim) {
        throw Error(ErrorCode::InvalidParameter, "contrast has the wrong dimension");
      }
    } else {
      a(options.coefficient) = 1.0;
    }
    out.center[k] = a.dot(pt.coef.segment(offset, dim));
    Projected pr;
    pr.subjects = process.points[k].subjects;
    for (const auto& term : process.points[k].terms) pr.values.push_back(a.dot(term));
    projected.push_back(std::move(pr));
  }
  if (projected.empty()) {
    throw Error(ErrorCode::EstimationFailed, "no usable grid point for the band");
  }

  out.sup_stats.assign(options.replicates, 0.0);
  const std::size_t n = process.n_subjects;
  parallel_for(options.replicates, options.threads, [&](std::size_t b) {
    const std::vector<double> u = options.unit_multipliers
                                      ? std::vector<double>(n, 1.0)
                                      : draw_multipliers(options.law, n, options.seed, b);
    double sup = 0.0;
    for (const auto& pr : projected) {
      double acc = 0.0;
      for (std::size_t r = 0; r < pr.subjects.size(); ++r) acc += u[pr.subjects[r]] * pr.values[r];
      sup = std::max(sup, std::fabs(acc));
    }
    out.sup_stats[b] = sup;
  });
  out.c_alpha = band_quantile(out.sup_stats, options.alpha);
  return out;
}

}  // namespace asynclc
