#include "asynclc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asynclc/error.hpp"
#include "asynclc/local_fit.hpp"

namespace asynclc {

using detail::LocalSolution;

std::size_t DesignLayout::dim() const {
  std::size_t d = 0;
  for (const auto& b : blocks) d += b.size;
  return d;
}

std::optional<BlockRange> DesignLayout::find(Block b) const {
  for (const auto& r : blocks) {
    if (r.block == b) return r;
  }
  return std::nullopt;
}

DesignLayout DesignLayout::one_step(std::size_t p, std::size_t q) {
  return {{{Block::Beta, 0, p}, {Block::BetaDot, p, p}, {Block::Gamma, 2 * p, q},
           {Block::GammaDot, 2 * p + q, q}}};
}

DesignLayout DesignLayout::centering(std::size_t p) {
  return {{{Block::Beta, 0, p}, {Block::BetaDot, p, p}}};
}

DesignLayout DesignLayout::vcm(std::size_t p) {
  return {{{Block::Alpha, 0, 1}, {Block::Beta, 1, p}, {Block::AlphaDot, p + 1, 1},
           {Block::BetaDot, p + 2, p}}};
}

DesignLayout DesignLayout::second_step(std::size_t q) {
  return {{{Block::Gamma, 0, q}, {Block::GammaDot, q, q}}};
}

Eigen::VectorXd CoefficientEstimate::block(Block b) const {
  const auto r = layout.find(b);
  if (!r) throw Error(ErrorCode::InvalidParameter, "estimate has no such block");
  return solution.segment(r->offset, r->size);
}

Eigen::MatrixXd CoefficientEstimate::block_cov(Block b) const {
  const auto r = layout.find(b);
  if (!r) throw Error(ErrorCode::InvalidParameter, "estimate has no such block");
  return full_cov.block(r->offset, r->offset, r->size, r->size);
}

Eigen::VectorXd CoefficientEstimate::block_se(Block b) const {
  return block_cov(b).diagonal().cwiseMax(0.0).cwiseSqrt();
}

namespace {

CoefficientEstimate make_estimate(double t, DesignLayout layout, const LocalSolution& sol) {
  CoefficientEstimate est;
  est.t = t;
  est.solution = sol.theta;
  est.full_cov = sol.cov;
  est.n_effective = sol.n_effective;

  std::vector<Eigen::Index> value_idx;
  std::vector<Eigen::Index> deriv_idx;
  const std::pair<Block, Block> order[] = {
      {Block::Alpha, Block::AlphaDot}, {Block::Beta, Block::BetaDot}, {Block::Gamma, Block::GammaDot}};
  for (const auto& [value, deriv] : order) {
    if (auto r = layout.find(value)) {
      for (std::size_t k = 0; k < r->size; ++k) value_idx.push_back(r->offset + k);
    }
    if (auto r = layout.find(deriv)) {
      for (std::size_t k = 0; k < r->size; ++k) deriv_idx.push_back(r->offset + k);
    }
  }
  est.coef = sol.theta(value_idx);
  est.deriv = sol.theta(deriv_idx);
  est.cov = sol.cov(value_idx, value_idx);
  est.layout = std::move(layout);
  return est;
}

}  // namespace

InterpolatedCurve::InterpolatedCurve(std::vector<double> times, std::vector<Eigen::VectorXd> values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.empty() || times_.size() != values_.size()) {
    throw Error(ErrorCode::EstimationFailed, "interpolated curve needs at least one point");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) {
      throw Error(ErrorCode::InvalidParameter, "interpolation times must be increasing");
    }
  }
}

Eigen::VectorXd InterpolatedCurve::operator()(double t) const {
  if (t <= times_.front()) return values_.front();
  if (t >= times_.back()) return values_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
  return (1.0 - w) * values_[lo] + w * values_[hi];
}

Eigen::VectorXd nw_mean(const LongitudinalDataset& dataset, double t, double h, MeanTarget target,
                        KernelFamily family) {
  require_bandwidth(h);
  const std::size_t dim = target == MeanTarget::Response ? 1 : dataset.p();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(dim);
  double den = 0.0;
  for (const auto& s : dataset.subjects()) {
    for (std::size_t j = 0; j < s.sync_count(); ++j) {
      const double w = eval_scaled_uni(family, h, s.sync_times[j] - t);
      if (w == 0.0) continue;
      if (target == MeanTarget::Response) {
        num(0) += w * s.responses[j];
      } else {
        num += w * s.sync_covariates.row(j).transpose();
      }
      den += w;
    }
  }
  if (!(den > 0.0)) {
    throw Error(ErrorCode::NoLocalData, "no sync observations within h=" + std::to_string(h) +
                                            " of t=" + std::to_string(t));
  }
  return num / den;
}

CenteredDataset center(const LongitudinalDataset& dataset, double h, KernelFamily family) {
  require_bandwidth(h);
  const SyncTimeIndex index(dataset);
  const std::size_t p = dataset.p();
  CenteredDataset out{dataset, h, {}, {}, {}, {}};
  for (const auto& s : dataset.subjects()) {
    const std::size_t L = s.sync_count();
    std::vector<double> my(L);
    Eigen::MatrixXd mx(L, p);
    for (std::size_t j = 0; j < L; ++j) {
      const double t0 = s.sync_times[j];
      double num_y = 0.0;
      Eigen::VectorXd num_x = Eigen::VectorXd::Zero(p);
      double den = 0.0;
      // Same terms in the same (subject, j) order as nw_mean.
      for (const auto& e : index.window(t0, h)) {
        const auto& other = dataset.subject(e.subject);
        const double w = eval_scaled_uni(family, h, other.sync_times[e.j] - t0);
        if (w == 0.0) continue;
        num_y += w * other.responses[e.j];
        num_x += w * other.sync_covariates.row(e.j).transpose();
        den += w;
      }
      if (!(den > 0.0)) {
        throw Error(ErrorCode::NoLocalData,
                    "no local data for centering at t=" + std::to_string(t0));
      }
      my[j] = num_y / den;
      mx.row(j) = (num_x / den).transpose();
    }
    std::vector<double> cy(L);
    for (std::size_t j = 0; j < L; ++j) cy[j] = s.responses[j] - my[j];
    out.centered_x.push_back(s.sync_covariates - mx);
    out.centered_y.push_back(std::move(cy));
    out.mean_y.push_back(std::move(my));
    out.mean_x.push_back(std::move(mx));
  }
  return out;
}

CoefficientEstimate fit_one_step(const LongitudinalDataset& dataset, double t, double h1,
                                 double h2, KernelFamily family) {
  require_bandwidth(h1, "h1");
  require_bandwidth(h2, "h2");
  const std::size_t p = dataset.p();
  const std::size_t q = dataset.q();
  if (q == 0) throw Error(ErrorCode::InvalidParameter, "one-step fit needs q >= 1");
  const std::size_t dim = 2 * (p + q);

  auto visit = [&](auto&& emit) {
    Eigen::VectorXd row(dim);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.subject(i);
      for (std::size_t j = 0; j < s.sync_count(); ++j) {
        const double d1 = s.sync_times[j] - t;
        if (!(std::fabs(d1) < h1)) continue;
        for (std::size_t k = 0; k < s.async_count(); ++k) {
          const double d2 = s.async_times[k] - t;
          const double w = eval_scaled_bi(family, h1, h2, d1, d2);
          if (w == 0.0) continue;
          row.segment(0, p) = s.sync_covariates.row(j).transpose();
          row.segment(p, p) = row.segment(0, p) * (d1 / h1);
          row.segment(2 * p, q) = s.async_covariates.row(k).transpose();
          row.segment(2 * p + q, q) = row.segment(2 * p, q) * (d2 / h2);
          emit(i, w, row, s.responses[j]);
        }
      }
    }
  };
  LocalSolution sol = detail::solve_weighted(dim, t, visit, "one-step fit");
  Eigen::VectorXd factors = Eigen::VectorXd::Ones(dim);
  factors.segment(p, p).setConstant(1.0 / h1);
  factors.segment(2 * p + q, q).setConstant(1.0 / h2);
  detail::rescale(sol, factors);
  return make_estimate(t, DesignLayout::one_step(p, q), sol);
}

CoefficientEstimate fit_centering(const CenteredDataset& centered, double t, double h,
                                  KernelFamily family) {
  require_bandwidth(h);
  const auto& data = centered.data;
  const std::size_t p = data.p();
  const double n = static_cast<double>(data.size());

  // S_{n,l} = (nh)^-1 sum K_h(T - t) Xc Xc' u^l and q_{n,l} likewise, u = (T - t)/h.
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Zero(p, p), s1 = s0, s2 = s0;
  Eigen::VectorXd q0 = Eigen::VectorXd::Zero(p), q1 = q0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.subject(i);
    for (std::size_t j = 0; j < s.sync_count(); ++j) {
      const double d = s.sync_times[j] - t;
      const double w = eval_scaled_uni(family, h, d);
      if (w == 0.0) continue;
      const double u = d / h;
      const Eigen::VectorXd x = centered.centered_x[i].row(j).transpose();
      const double y = centered.centered_y[i][j];
      const Eigen::MatrixXd xx = x * x.transpose();
      s0 += w * xx;
      s1 += (w * u) * xx;
      s2 += (w * u * u) * xx;
      q0 += (w * y) * x;
      q1 += (w * u * y) * x;
      ++count;
    }
  }
  if (count == 0) {
    throw Error(ErrorCode::NoLocalData,
                "centering fit: no observations within h of t=" + std::to_string(t));
  }
  const double scale = 1.0 / (n * h);
  Eigen::MatrixXd m(2 * p, 2 * p);
  m << s0 * scale, s1 * scale, s1 * scale, s2 * scale;
  Eigen::VectorXd rhs(2 * p);
  rhs << q0 * scale, q1 * scale;

  LocalSolution sol;
  sol.normal = m / scale;
  sol.normal_inv = detail::checked_inverse(m, t, "centering fit") * scale;
  sol.theta = m.ldlt().solve(rhs);  // (beta, h * beta')
  sol.n_effective = count;

  auto visit = [&](auto&& emit) {
    Eigen::VectorXd row(2 * p);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& s = data.subject(i);
      for (std::size_t j = 0; j < s.sync_count(); ++j) {
        const double d = s.sync_times[j] - t;
        const double w = eval_scaled_uni(family, h, d);
        if (w == 0.0) continue;
        row.head(p) = centered.centered_x[i].row(j).transpose();
        row.tail(p) = row.head(p) * (d / h);
        emit(i, w, row, centered.centered_y[i][j]);
      }
    }
  };
  sol.cov = detail::sandwich_cov(2 * p, visit, sol.theta, sol.normal_inv);
  Eigen::VectorXd factors = Eigen::VectorXd::Ones(2 * p);
  factors.tail(p).setConstant(1.0 / h);
  detail::rescale(sol, factors);
  return make_estimate(t, DesignLayout::centering(p), sol);
}

CoefficientEstimate fit_vcm(const LongitudinalDataset& dataset, double t, double h,
                            KernelFamily family) {
  require_bandwidth(h);
  const std::size_t p = dataset.p();
  const std::size_t dim = 2 * (p + 1);
  auto visit = [&](auto&& emit) {
    Eigen::VectorXd row(dim);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.subject(i);
      for (std::size_t j = 0; j < s.sync_count(); ++j) {
        const double d = s.sync_times[j] - t;
        const double w = eval_scaled_uni(family, h, d);
        if (w == 0.0) continue;
        const double u = d / h;
        row(0) = 1.0;
        row.segment(1, p) = s.sync_covariates.row(j).transpose();
        row.segment(p + 1, p + 1) = row.head(p + 1) * u;
        emit(i, w, row, s.responses[j]);
      }
    }
  };
  LocalSolution sol = detail::solve_weighted(dim, t, visit, "varying-coefficient fit");
  Eigen::VectorXd factors = Eigen::VectorXd::Ones(dim);
  factors.tail(p + 1).setConstant(1.0 / h);
  detail::rescale(sol, factors);
  return make_estimate(t, DesignLayout::vcm(p), sol);
}

CoefficientEstimate fit_gamma_second_step(const LongitudinalDataset& dataset,
                                          const CurveFunction& beta, double t, double h1,
                                          double h2, KernelFamily family) {
  require_bandwidth(h1, "h1");
  require_bandwidth(h2, "h2");
  const std::size_t q = dataset.q();
  if (q == 0) throw Error(ErrorCode::InvalidParameter, "second-step fit needs q >= 1");
  const std::size_t dim = 2 * q;

  // Partial residuals only depend on the sync observation.
  std::vector<std::vector<double>> partial(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.subject(i);
    partial[i].assign(s.sync_count(), 0.0);
    for (std::size_t j = 0; j < s.sync_count(); ++j) {
      if (!(std::fabs(s.sync_times[j] - t) < h1)) continue;
      const Eigen::VectorXd b = beta(s.sync_times[j]);
      partial[i][j] = s.responses[j] - s.sync_covariates.row(j).dot(b);
    }
  }

  auto visit = [&](auto&& emit) {
    Eigen::VectorXd row(dim);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.subject(i);
      for (std::size_t j = 0; j < s.sync_count(); ++j) {
        const double d1 = s.sync_times[j] - t;
        if (!(std::fabs(d1) < h1)) continue;
        for (std::size_t k = 0; k < s.async_count(); ++k) {
          const double d2 = s.async_times[k] - t;
          const double w = eval_scaled_bi(family, h1, h2, d1, d2);
          if (w == 0.0) continue;
          row.head(q) = s.async_covariates.row(k).transpose();
          row.tail(q) = row.head(q) * (d2 / h2);
          emit(i, w, row, partial[i][j]);
        }
      }
    }
  };
  LocalSolution sol = detail::solve_weighted(dim, t, visit, "second-step fit");
  Eigen::VectorXd factors = Eigen::VectorXd::Ones(dim);
  factors.tail(q).setConstant(1.0 / h2);
  detail::rescale(sol, factors);
  return make_estimate(t, DesignLayout::second_step(q), sol);
}

namespace {

constexpr double kScaleFloor = 1e-10;

struct ColumnView {
  std::vector<double> times;
  std::vector<double> values;
};

// NW mean and NW variance of `values` at t0, variance in the two-pass form.
std::pair<double, double> local_moments(const ColumnView& col, double t0, double h,
                                        KernelFamily family) {
  double den = 0.0, num = 0.0;
  for (std::size_t r = 0; r < col.times.size(); ++r) {
    const double w = eval_scaled_uni(family, h, col.times[r] - t0);
    if (w == 0.0) continue;
    num += w * col.values[r];
    den += w;
  }
  const double mean = num / den;
  double var = 0.0;
  for (std::size_t r = 0; r < col.times.size(); ++r) {
    const double w = eval_scaled_uni(family, h, col.times[r] - t0);
    if (w == 0.0) continue;
    const double d = col.values[r] - mean;
    var += w * d * d;
  }
  return {mean, var / den};
}

}  // namespace

LongitudinalDataset normalize_longitudinal(const LongitudinalDataset& dataset, double h,
                                           ColumnSelector column, KernelFamily family) {
  require_bandwidth(h);
  const bool sync = column.process == ColumnSelector::Process::Sync;
  const std::size_t width = sync ? dataset.p() : dataset.q();
  if (column.index >= width) {
    throw Error(ErrorCode::InvalidParameter, "normalize: column index out of range");
  }
  auto matrix_of = [&](SubjectRecord& s) -> Eigen::MatrixXd& {
    return sync ? s.sync_covariates : s.async_covariates;
  };
  auto times_of = [&](const SubjectRecord& s) -> const std::vector<double>& {
    return sync ? s.sync_times : s.async_times;
  };

  std::vector<SubjectRecord> subjects = dataset.subjects();
  if (column.baseline) {
    double sum = 0.0;
    std::size_t count = 0;
    for (auto& s : subjects) {
      if (matrix_of(s).rows() == 0) continue;
      sum += matrix_of(s)(0, column.index);
      ++count;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (auto& s : subjects) {
      if (matrix_of(s).rows() == 0) continue;
      const double d = matrix_of(s)(0, column.index) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > kScaleFloor)) {
      throw Error(ErrorCode::DegenerateScale, "normalize: baseline column has zero spread");
    }
    for (auto& s : subjects) {
      auto col = matrix_of(s).col(column.index);
      col = ((col.array() - mean) / sd).matrix();
    }
  } else {
    ColumnView view;
    for (auto& s : subjects) {
      const auto& times = times_of(s);
      for (std::size_t r = 0; r < times.size(); ++r) {
        view.times.push_back(times[r]);
        view.values.push_back(matrix_of(s)(r, column.index));
      }
    }
    for (auto& s : subjects) {
      const auto& times = times_of(s);
      for (std::size_t r = 0; r < times.size(); ++r) {
        const auto [mean, var] = local_moments(view, times[r], h, family);
        const double sd = std::sqrt(std::max(var, 0.0));
        if (!(sd > kScaleFloor)) {
          throw Error(ErrorCode::DegenerateScale,
                      "normalize: zero local spread at t=" + std::to_string(times[r]));
        }
        double& x = matrix_of(s)(r, column.index);
        x = (x - mean) / sd;
      }
    }
  }
  return LongitudinalDataset(std::move(subjects), dataset.p(), dataset.q(), dataset.time_scale(), 1);
}

ConstantFit fit_constant_beta(const CenteredDataset& centered) {
  const auto& data = centered.data;
  const std::size_t p = data.p();
  auto visit = [&](auto&& emit) {
    Eigen::VectorXd row(p);
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < data.subject(i).sync_count(); ++j) {
        row = centered.centered_x[i].row(j).transpose();
        emit(i, 1.0, row, centered.centered_y[i][j]);
      }
    }
  };
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  visit([&](std::size_t, double w, const Eigen::VectorXd& row, double y) {
    normal += w * row * row.transpose();
    rhs += (w * y) * row;
  });
  const Eigen::MatrixXd inv =
      detail::checked_inverse(normal, 0.0, "constant beta fit", ErrorCode::SingularFit);
  ConstantFit out;
  out.beta = normal.ldlt().solve(rhs);
  out.beta_cov = detail::sandwich_cov(p, visit, out.beta, inv);
  out.beta_se = out.beta_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

ConstantFit fit_constant_gamma(const LongitudinalDataset& dataset, const CurveFunction& beta,
                               double pair_bandwidth, KernelFamily family) {
  require_bandwidth(pair_bandwidth);
  const std::size_t q = dataset.q();
  if (q == 0) throw Error(ErrorCode::InvalidParameter, "constant gamma fit needs q >= 1");
  std::vector<std::vector<double>> partial(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.subject(i);
    for (std::size_t j = 0; j < s.sync_count(); ++j) {
      partial[i].push_back(s.responses[j] - s.sync_covariates.row(j).dot(beta(s.sync_times[j])));
    }
  }
  auto visit = [&](auto&& emit) {
    Eigen::VectorXd row(q);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      for (const auto& pr : pairs(dataset.subject(i))) {
        const double w =
            eval_scaled_uni(family, pair_bandwidth, pr.sync_time - pr.async_time);
        if (w == 0.0) continue;
        row = pr.z.transpose();
        emit(i, w, row, partial[i][pr.j]);
      }
    }
  };
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
  std::size_t count = 0;
  visit([&](std::size_t, double w, const Eigen::VectorXd& row, double y) {
    normal += w * row * row.transpose();
    rhs += (w * y) * row;
    ++count;
  });
  if (count == 0) {
    throw Error(ErrorCode::SingularFit, "constant gamma fit: no pairs within the bandwidth");
  }
  const Eigen::MatrixXd inv =
      detail::checked_inverse(normal, 0.0, "constant gamma fit", ErrorCode::SingularFit);
  ConstantFit out;
  out.gamma = normal.ldlt().solve(rhs);
  out.gamma_cov = detail::sandwich_cov(q, visit, out.gamma, inv);
  out.gamma_se = out.gamma_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

ConstantFit fit_constant_coefficients(const CenteredDataset& centered, ConstantBlocks which,
                                      double pair_bandwidth, const CurveFunction* beta_curve,
                                      KernelFamily family) {
  ConstantFit out;
  CurveFunction beta_fn;
  if (which.beta) {
    out = fit_constant_beta(centered);
    const Eigen::VectorXd b = out.beta;
    beta_fn = [b](double) { return b; };
  } else if (which.gamma) {
    if (beta_curve == nullptr) {
      throw Error(ErrorCode::InvalidParameter,
                  "constant gamma with varying beta needs a first-stage beta curve");
    }
    beta_fn = *beta_curve;
  }
  if (which.gamma) {
    ConstantFit g = fit_constant_gamma(centered.data, beta_fn, pair_bandwidth, family);
    out.gamma = std::move(g.gamma);
    out.gamma_se = std::move(g.gamma_se);
    out.gamma_cov = std::move(g.gamma_cov);
  }
  return out;
}

}  // namespace asynclc
