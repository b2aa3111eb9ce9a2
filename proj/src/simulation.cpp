#include "asynclc/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "asynclc/bandwidth.hpp"
#include "asynclc/error.hpp"
#include "asynclc/parallel.hpp"

namespace asynclc {

namespace {

constexpr std::uint64_t kDataTag = 0xda7a;
constexpr std::uint64_t kScbTag = 0xb00;
constexpr std::uint64_t kCvTag = 0xc5;
constexpr std::size_t kKeptMessages = 5;

double exp_cov(double t, double s) { return std::exp(-std::fabs(t - s)); }

const char* const kCoefNames[2] = {"beta", "gamma"};

struct EstimatorOutcome {
  bool ok = false;
  std::string failure;
  // [coefficient][eval time]
  std::vector<std::vector<double>> est;
  std::vector<std::vector<double>> se;
  double rase[2] = {0.0, 0.0};
  bool ci_cover[2] = {false, false};
  bool scb_cover[2] = {false, false};
};

FitBandwidths auto_bandwidths(const EstimatorSpec& spec, const LongitudinalDataset& data,
                              std::uint64_t seed) {
  const std::size_t n = data.size();
  FitBandwidths bw;
  if (spec.method == Method::OneStep) {
    const CvResult r = select(default_plan(Stage::OneStep, n, seed), data, Stage::OneStep);
    bw.h = bw.h1 = r.chosen.h1;
    bw.h2 = r.chosen.h2;
    return bw;
  }
  const CvResult first = select(default_plan(Stage::FirstStage, n, seed), data, Stage::FirstStage);
  bw.h = first.chosen.h1;
  const CenteredDataset centered = center(data, bw.h);
  const InterpolatedCurve beta_curve = first_stage_curve(
      data, spec.method, bw.h, spec.method == Method::TwoStepCentering ? &centered : nullptr);
  const CurveFunction beta = [&](double t) { return beta_curve(t); };
  const CvResult second =
      select(default_plan(Stage::SecondStage, n, seed), data, Stage::SecondStage, &beta);
  bw.h1 = second.chosen.h1;
  bw.h2 = second.chosen.h2;
  return bw;
}

EstimatorOutcome run_estimator(const McConfig& mc, const DgpConfig& dgp,
                               const EstimatorSpec& spec, const LongitudinalDataset& data,
                               std::size_t replicate) {
  const ScalarFunction truth[2] = {[&](double t) { return dgp.beta_at(t); },
                                   [&](double t) { return dgp.gamma_at(t); }};
  const std::size_t T = mc.eval_times.size();
  EstimatorOutcome out;
  out.est.assign(2, std::vector<double>(T, 0.0));
  out.se.assign(2, std::vector<double>(T, 1.0));

  if (mc.use_truth) {
    for (int c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < T; ++k) out.est[c][k] = truth[c](mc.eval_times[k]);
      out.ci_cover[c] = out.scb_cover[c] = true;
    }
    out.ok = true;
    return out;
  }

  const FitBandwidths bw =
      spec.auto_bandwidth ? auto_bandwidths(spec, data, derive_seed(mc.seed, replicate, kCvTag))
                          : spec.resolve(data.size());
  const CurveFitter fitter(data, spec.method, bw);
  for (std::size_t k = 0; k < T; ++k) {
    const CurvePoint pt = fitter.fit(mc.eval_times[k]).point;
    if (!pt.ok) {
      out.failure = pt.failure;
      return out;
    }
    const std::size_t b = spec.method == Method::TwoStepVCM ? 1 : 0;
    const std::size_t g = b + data.p();
    out.est[0][k] = pt.coef(b);
    out.se[0][k] = pt.se(b);
    out.est[1][k] = pt.coef(g);
    out.se[1][k] = pt.se(g);
  }
  if (mc.curve_metrics) {
    const CurveEstimate curve = fitter.fit_curve(mc.grid, 1);
    if (curve.ok_count() != curve.points.size()) {
      for (const auto& pt : curve.points) {
        if (!pt.ok) {
          out.failure = pt.failure;
          break;
        }
      }
      return out;
    }
    const std::size_t index[2] = {curve.beta_index(0), curve.gamma_index(0)};
    for (int c = 0; c < 2; ++c) {
      out.rase[c] = rase(curve, index[c], truth[c]);
      bool all = true;
      for (const auto& pt : curve.points) {
        const double z = std::fabs(pt.coef(index[c]) - truth[c](pt.t));
        if (!(z <= kPointwiseZ * pt.se(index[c]) * mc.se_scale)) {
          all = false;
          break;
        }
      }
      out.ci_cover[c] = all;
    }
    if (spec.scb) {
      BandOptions opt;
      opt.replicates = mc.scb_replicates;
      opt.alpha = mc.alpha;
      opt.law = mc.law;
      opt.seed = derive_seed(mc.seed, replicate, kScbTag);
      const BandTarget targets[2] = {BandTarget::Beta, BandTarget::Gamma};
      for (int c = 0; c < 2; ++c) {
        const ScbResult band = bootstrap_band(data, curve, targets[c], opt);
        bool all = true;
        for (std::size_t k = 0; k < band.grid.size(); ++k) {
          if (!(std::fabs(band.center[k] - truth[c](band.grid[k])) <= band.c_alpha)) {
            all = false;
            break;
          }
        }
        out.scb_cover[c] = all;
      }
    }
  }
  out.ok = true;
  return out;
}

double sample_sd(const std::vector<double>& v, double m) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

const char* setting_name(Setting s) {
  switch (s) {
    case Setting::I: return "i";
    case Setting::II: return "ii";
    case Setting::Custom: return "custom";
  }
  return "?";
}

Setting parse_setting(const std::string& name) {
  if (name == "i" || name == "1") return Setting::I;
  if (name == "ii" || name == "2") return Setting::II;
  throw Error(ErrorCode::InvalidParameter, "unknown setting '" + name + "' (use i or ii)");
}

double DgpConfig::beta_at(double t) const {
  switch (setting) {
    case Setting::I: return 3.0 * (t - 0.4) * (t - 0.4);
    case Setting::II: return 0.4 * t + 0.5;
    case Setting::Custom: return beta(t);
  }
  return 0.0;
}

double DgpConfig::gamma_at(double t) const {
  switch (setting) {
    case Setting::I: return std::sin(2.0 * std::numbers::pi * t);
    case Setting::II: return std::sqrt(t);
    case Setting::Custom: return gamma(t);
  }
  return 0.0;
}

void DgpConfig::check() const {
  if (n < 2) throw Error(ErrorCode::InvalidSampleSize, "simulation needs n >= 2");
  if (!(obs_rate > 0.0) || !std::isfinite(obs_rate)) {
    throw Error(ErrorCode::InvalidParameter, "observation rate must be positive");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw Error(ErrorCode::InvalidParameter, "noise scale must be nonnegative");
  }
  if (setting == Setting::Custom && (!beta || !gamma)) {
    throw Error(ErrorCode::InvalidParameter, "custom setting needs beta and gamma functions");
  }
}

GpSample sample_gp(std::span<const double> times, const ScalarFunction& mean_fn,
                   const std::function<double(double, double)>& cov_fn, Rng& rng) {
  const auto m = static_cast<Eigen::Index>(times.size());
  GpSample out;
  Eigen::MatrixXd cov(m, m);
  Eigen::VectorXd mean(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    mean(a) = mean_fn(times[a]);
    for (Eigen::Index b = 0; b <= a; ++b) cov(a, b) = cov(b, a) = cov_fn(times[a], times[b]);
  }
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    cov.diagonal().array() += 1e-12;
    out.jittered = true;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::CovarianceNotPD, "GP covariance is not positive definite");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(m);
  for (Eigen::Index a = 0; a < m; ++a) z(a) = normal(rng);
  out.values = mean + llt.matrixL() * z;
  return out;
}

LongitudinalDataset generate_dataset(const DgpConfig& cfg, Rng& rng) {
  cfg.check();
  std::poisson_distribution<int> count(cfg.obs_rate);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const ScalarFunction zero = [](double) { return 0.0; };
  const ScalarFunction z_mean = [](double t) { return 2.0 * (t - 0.5) * (t - 0.5); };
  const double noise_var = cfg.noise_scale * cfg.noise_scale;
  const auto noise_cov = [noise_var](double t, double s) {
    return noise_var * std::pow(2.0, -std::fabs(t - s));
  };

  std::vector<SubjectRecord> subjects(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    SubjectRecord& s = subjects[i];
    s.id = "s" + std::to_string(i + 1);
    const auto L = static_cast<std::size_t>(count(rng)) + 1;
    const auto M = static_cast<std::size_t>(count(rng)) + 1;
    s.sync_times.resize(L);
    s.async_times.resize(M);
    for (auto& t : s.sync_times) t = unit(rng);
    for (auto& t : s.async_times) t = unit(rng);
    std::sort(s.sync_times.begin(), s.sync_times.end());
    std::sort(s.async_times.begin(), s.async_times.end());

    const Eigen::VectorXd x = sample_gp(s.sync_times, zero, exp_cov, rng).values;

    std::vector<double> joint(s.sync_times);
    joint.insert(joint.end(), s.async_times.begin(), s.async_times.end());
    Eigen::VectorXd z;
    if (cfg.z_time_constant) {
      z = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(L + M), normal(rng));
    } else {
      z = sample_gp(joint, z_mean, exp_cov, rng).values;
    }

    Eigen::VectorXd eps = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L));
    if (noise_var > 0.0) eps = sample_gp(s.sync_times, zero, noise_cov, rng).values;

    s.sync_covariates = x;
    s.responses.resize(L);
    for (std::size_t j = 0; j < L; ++j) {
      const double t = s.sync_times[j];
      s.responses[j] = x(j) * cfg.beta_at(t) + z(j) * cfg.gamma_at(t) + eps(j);
    }
    s.async_covariates = z.tail(static_cast<Eigen::Index>(M));
  }
  return LongitudinalDataset(std::move(subjects), 1, 1);
}

LongitudinalDataset generate_replicate(const DgpConfig& cfg, std::size_t replicate) {
  Rng rng = make_rng(cfg.seed, replicate, kDataTag);
  return generate_dataset(cfg, rng);
}

std::string EstimatorSpec::describe() const {
  if (!label.empty()) return label;
  std::string out = method_name(method);
  if (auto_bandwidth) return out + " auto";
  if (method != Method::OneStep) out += " h=" + h.describe();
  return out + " h1=" + h1.describe() + " h2=" + h2.describe();
}

FitBandwidths EstimatorSpec::resolve(std::size_t n) const {
  FitBandwidths bw;
  bw.h1 = h1.resolve(n);
  bw.h2 = h2.resolve(n);
  bw.h = method == Method::OneStep ? bw.h1 : h.resolve(n);
  return bw;
}

void McConfig::check() const {
  if (replicates < 1) throw Error(ErrorCode::InvalidParameter, "replicates must be >= 1");
  if (estimators.empty()) throw Error(ErrorCode::InvalidParameter, "no estimators configured");
  if (eval_times.empty()) throw Error(ErrorCode::InvalidParameter, "no evaluation times");
  for (double t : eval_times) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::InvalidParameter, "evaluation time outside [0,1]");
    }
  }
  for (double t : grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidParameter, "grid outside [0,1]");
  }
  if (curve_metrics && grid.empty()) throw Error(ErrorCode::InvalidParameter, "empty grid");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidParameter, "alpha must lie in (0,1)");
  }
  if (!(se_scale > 0.0)) throw Error(ErrorCode::InvalidParameter, "se_scale must be positive");
  for (const auto& e : estimators) {
    if (e.scb && scb_replicates < 100) {
      throw Error(ErrorCode::InvalidParameter, "bootstrap needs B >= 100");
    }
  }
}

const PointSummary* SimulationReport::find_point(const std::string& estimator,
                                                 const std::string& coefficient,
                                                 double t) const {
  for (const auto& p : points) {
    if (p.estimator == estimator && p.coefficient == coefficient && std::fabs(p.t - t) < 1e-12) {
      return &p;
    }
  }
  return nullptr;
}

const CurveSummary* SimulationReport::find_curve(const std::string& estimator,
                                                 const std::string& coefficient) const {
  for (const auto& c : curves) {
    if (c.estimator == estimator && c.coefficient == coefficient) return &c;
  }
  return nullptr;
}

SimulationReport run_monte_carlo(const McConfig& mc, const DgpConfig& dgp) {
  mc.check();
  dgp.check();
  const std::size_t R = mc.replicates;
  const std::size_t E = mc.estimators.size();
  const std::size_t T = mc.eval_times.size();

  std::vector<std::vector<EstimatorOutcome>> outcomes(R);
  parallel_for(R, mc.threads, [&](std::size_t r) {
    const LongitudinalDataset data = generate_replicate(dgp, r);
    outcomes[r].resize(E);
    for (std::size_t e = 0; e < E; ++e) {
      try {
        outcomes[r][e] = run_estimator(mc, dgp, mc.estimators[e], data, r);
      } catch (const Error& err) {
        if (err.code() == ErrorCode::InvalidParameter || err.code() == ErrorCode::InvalidBandwidth) {
          throw;
        }
        outcomes[r][e].ok = false;
        outcomes[r][e].failure = std::string(error_code_name(err.code())) + ": " + err.what();
      }
    }
  });

  SimulationReport report;
  report.n = dgp.n;
  report.setting = dgp.setting;
  report.replicates = R;
  report.seed = mc.seed;
  const ScalarFunction truth[2] = {[&](double t) { return dgp.beta_at(t); },
                                   [&](double t) { return dgp.gamma_at(t); }};

  for (std::size_t e = 0; e < E; ++e) {
    const std::string label = mc.estimators[e].describe();
    EstimatorFailures fail{label, 0, {}};
    std::vector<const EstimatorOutcome*> ok;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& o = outcomes[r][e];
      if (o.ok) {
        ok.push_back(&o);
      } else {
        ++fail.failures;
        if (fail.messages.size() < kKeptMessages) {
          fail.messages.push_back("replicate " + std::to_string(r) + ": " + o.failure);
        }
      }
    }
    if (10 * fail.failures > R) {
      report.warnings.push_back("DEGENERATE_STUDY: " + label + " failed in " +
                                std::to_string(fail.failures) + " of " + std::to_string(R) +
                                " replicates");
    }
    report.failures.push_back(fail);

    for (int c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < T; ++k) {
        const double t = mc.eval_times[k];
        std::vector<double> err, se;
        std::size_t covered = 0;
        for (const auto* o : ok) {
          const double d = o->est[c][k] - truth[c](t);
          err.push_back(d);
          se.push_back(o->se[c][k]);
          if (std::fabs(d) <= kPointwiseZ * o->se[c][k] * mc.se_scale) ++covered;
        }
        PointSummary ps;
        ps.estimator = label;
        ps.coefficient = kCoefNames[c];
        ps.t = t;
        ps.count = ok.size();
        ps.bias = mean_of(err);
        ps.sd = sample_sd(err, ps.bias);
        ps.mean_se = mean_of(se);
        ps.cp = ok.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : 100.0 * static_cast<double>(covered) / static_cast<double>(ok.size());
        ps.bias_mcse = ok.empty() ? 0.0 : ps.sd / std::sqrt(static_cast<double>(ok.size()));
        report.points.push_back(ps);
      }
      if (mc.curve_metrics) {
        CurveSummary cs;
        cs.estimator = label;
        cs.coefficient = kCoefNames[c];
        cs.count = ok.size();
        std::vector<double> r;
        std::size_t ci = 0, band = 0;
        for (const auto* o : ok) {
          r.push_back(o->rase[c]);
          ci += o->ci_cover[c] ? 1 : 0;
          band += o->scb_cover[c] ? 1 : 0;
        }
        const double cnt = static_cast<double>(ok.size());
        cs.rase_mean = mean_of(r);
        cs.rase_sd = sample_sd(r, cs.rase_mean);
        cs.ci_coverage = ok.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : 100.0 * static_cast<double>(ci) / cnt;
        cs.scb_coverage = (mc.estimators[e].scb || mc.use_truth) && !ok.empty()
                              ? 100.0 * static_cast<double>(band) / cnt
                              : std::numeric_limits<double>::quiet_NaN();
        report.curves.push_back(cs);
      }
    }
  }
  return report;
}

double rase(std::span<const double> estimates, std::span<const double> truth) {
  if (estimates.size() != truth.size() || estimates.empty()) {
    throw Error(ErrorCode::InvalidParameter, "rase needs matching nonempty vectors");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const double d = estimates[k] - truth[k];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(estimates.size()));
}

double rase(const CurveEstimate& curve, std::size_t coef_index, const ScalarFunction& truth) {
  std::vector<double> est, tru;
  for (const auto& pt : curve.points) {
    if (!pt.ok) throw Error(ErrorCode::EstimationFailed, "curve does not cover the grid");
    est.push_back(pt.coef(static_cast<Eigen::Index>(coef_index)));
    tru.push_back(truth(pt.t));
  }
  return rase(est, tru);
}

}  // namespace asynclc
