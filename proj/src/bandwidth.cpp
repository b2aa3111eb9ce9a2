#include "asynclc/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "asynclc/curve.hpp"
#include "asynclc/error.hpp"
#include "asynclc/parallel.hpp"
#include "asynclc/rng.hpp"

namespace asynclc {

namespace {

constexpr std::uint64_t kFoldTag = 0xf01d;

void normalize_candidates(std::vector<CvCandidate>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidParameter, "no bandwidth candidates");
  for (const auto& c : candidates) {
    require_bandwidth(c.h1, "h1");
    require_bandwidth(c.h2, "h2");
  }
  std::sort(candidates.begin(), candidates.end(), [](const CvCandidate& a, const CvCandidate& b) {
    return a.h1 != b.h1 ? a.h1 < b.h1 : a.h2 < b.h2;
  });
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
}

void check_times(const std::vector<double>& times) {
  if (times.empty()) throw Error(ErrorCode::InvalidParameter, "no evaluation times");
  for (double t : times) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::InvalidParameter, "evaluation time outside [0,1]");
    }
  }
}

std::vector<std::size_t> complement(const std::vector<std::size_t>& held_out, std::size_t n) {
  std::vector<bool> out(n, false);
  for (auto i : held_out) out[i] = true;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out[i]) keep.push_back(i);
  }
  return keep;
}

[[noreturn]] void degenerate(std::size_t fold, double t, const std::string& why) {
  throw Error(ErrorCode::FoldDegenerate,
              "fold " + std::to_string(fold + 1) + " at t=" + std::to_string(t) + ": " + why);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Memoized training fits keyed by evaluation time.
template <class Fit>
class FitCache {
 public:
  explicit FitCache(Fit fit) : fit_(std::move(fit)) {}

  const Eigen::VectorXd& at(double t) {
    auto it = cache_.find(t);
    if (it == cache_.end()) it = cache_.emplace(t, fit_(t)).first;
    return it->second;
  }

 private:
  Fit fit_;
  std::map<double, Eigen::VectorXd> cache_;
};

// Runs `body` for one fold, converting fit failures into FoldDegenerate.
template <class Body>
double guarded(std::size_t fold, double t, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularLocalFit || e.code() == ErrorCode::NoLocalData) {
      degenerate(fold, t, std::string("training fit failed (") + e.what() + ")");
    }
    throw;
  }
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::FirstStage: return "first-stage";
    case Stage::SecondStage: return "second-stage";
    case Stage::OneStep: return "one-step";
  }
  return "?";
}

std::vector<std::vector<std::size_t>> CvPlan::fold_members() const {
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < fold_of_subject.size(); ++i) {
    by_label[fold_of_subject[i]].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto& [label, members] : by_label) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

CvPlan make_plan(std::size_t n_subjects, std::size_t folds, std::vector<CvCandidate> candidates,
                 std::vector<double> eval_times, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidParameter, "cross-validation needs D >= 2 folds");
  if (folds > n_subjects) {
    throw Error(ErrorCode::InvalidParameter, "more folds than subjects");
  }
  std::vector<std::size_t> order(n_subjects);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0, kFoldTag);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> labels(n_subjects);
  for (std::size_t r = 0; r < n_subjects; ++r) labels[order[r]] = r % folds;
  CvPlan plan = make_plan_with_folds(std::move(labels), std::move(candidates),
                                     std::move(eval_times));
  plan.seed = seed;
  return plan;
}

CvPlan make_plan_with_folds(std::vector<std::size_t> fold_of_subject,
                            std::vector<CvCandidate> candidates, std::vector<double> eval_times) {
  normalize_candidates(candidates);
  check_times(eval_times);
  CvPlan plan;
  plan.fold_of_subject = std::move(fold_of_subject);
  plan.candidates = std::move(candidates);
  plan.eval_times = std::move(eval_times);
  plan.folds = plan.fold_members().size();
  if (plan.folds < 2) throw Error(ErrorCode::InvalidParameter, "cross-validation needs D >= 2 folds");
  return plan;
}

std::vector<CvCandidate> default_candidates(Stage stage, std::size_t n) {
  const double lo_exp = stage == Stage::FirstStage ? 0.8 : 0.5;
  const double hi_exp = stage == Stage::FirstStage ? 0.6 : 0.4;
  const double lo = std::log(bandwidth_rule(n, lo_exp));
  const double hi = std::log(bandwidth_rule(n, hi_exp));
  constexpr int kCount = 8;
  std::vector<CvCandidate> out;
  for (int c = 0; c < kCount; ++c) {
    const double h = std::exp(lo + (hi - lo) * (c + 0.5) / kCount);
    out.push_back({h, h});
  }
  return out;
}

std::vector<double> default_eval_times() { return uniform_grid(0.1, 0.9, 9); }

CvPlan default_plan(Stage stage, std::size_t n, std::uint64_t seed) {
  return make_plan(n, std::min<std::size_t>(5, n), default_candidates(stage, n),
                   default_eval_times(), seed);
}

std::vector<double> fold_ratios_beta(const CvPlan& plan, const CenteredDataset& centered,
                                     double t, double h) {
  require_bandwidth(h, "h");
  const auto folds = plan.fold_members();
  const std::size_t n = centered.size();
  if (plan.fold_of_subject.size() != n) {
    throw Error(ErrorCode::InvalidParameter, "fold assignment does not match the dataset");
  }
  std::vector<double> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    out.push_back(guarded(f, t, [&] {
      const auto keep = complement(folds[f], n);
      const CenteredDataset training = centered.subset(keep);
      double a = 0.0;
      double b = 0.0;
      for (auto i : folds[f]) {
        const auto& times = centered.data.subject(i).sync_times;
        for (std::size_t j = 0; j < times.size(); ++j) {
          const double w = eval_scaled_uni(plan.family, h, times[j] - t);
          if (w == 0.0) continue;
          const Eigen::VectorXd beta = fit_centering(training, times[j], h, plan.family).coef;
          const double e = centered.centered_y[i][j] - centered.centered_x[i].row(j).dot(beta);
          a += w * e * e;
          b += w;
        }
      }
      if (b == 0.0) degenerate(f, t, "no held-out kernel mass");
      return a / b;
    }));
  }
  return out;
}

std::vector<double> fold_ratios_gamma(const CvPlan& plan, const LongitudinalDataset& dataset,
                                      const CurveFunction& beta, double t, double h1,
                                      double h2) {
  require_bandwidth(h1, "h1");
  require_bandwidth(h2, "h2");
  const auto folds = plan.fold_members();
  const std::size_t n = dataset.size();
  if (plan.fold_of_subject.size() != n) {
    throw Error(ErrorCode::InvalidParameter, "fold assignment does not match the dataset");
  }
  std::vector<double> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    out.push_back(guarded(f, t, [&] {
      const auto keep = complement(folds[f], n);
      const LongitudinalDataset training = dataset.subset(keep);
      FitCache gamma([&](double s) {
        return fit_gamma_second_step(training, beta, s, h1, h2, plan.family).coef;
      });
      double c = 0.0;
      double d = 0.0;
      for (auto i : folds[f]) {
        const auto& subj = dataset.subject(i);
        for (std::size_t j = 0; j < subj.sync_count(); ++j) {
          const double d1 = subj.sync_times[j] - t;
          if (!(std::fabs(d1) < h1)) continue;
          const double partial =
              subj.responses[j] - subj.sync_covariates.row(j).dot(beta(subj.sync_times[j]));
          for (std::size_t k = 0; k < subj.async_count(); ++k) {
            const double w = eval_scaled_bi(plan.family, h1, h2, d1, subj.async_times[k] - t);
            if (w == 0.0) continue;
            const double e =
                partial - subj.async_covariates.row(k).dot(gamma.at(subj.async_times[k]));
            c += w * e * e;
            d += w;
          }
        }
      }
      if (d == 0.0) degenerate(f, t, "no held-out kernel mass");
      return c / d;
    }));
  }
  return out;
}

std::vector<double> fold_ratios_one_step(const CvPlan& plan, const LongitudinalDataset& dataset,
                                         double t, double h1, double h2) {
  require_bandwidth(h1, "h1");
  require_bandwidth(h2, "h2");
  const auto folds = plan.fold_members();
  const std::size_t n = dataset.size();
  const std::size_t p = dataset.p();
  const std::size_t q = dataset.q();
  if (plan.fold_of_subject.size() != n) {
    throw Error(ErrorCode::InvalidParameter, "fold assignment does not match the dataset");
  }
  std::vector<double> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    out.push_back(guarded(f, t, [&] {
      const auto keep = complement(folds[f], n);
      const LongitudinalDataset training = dataset.subset(keep);
      FitCache joint(
          [&](double s) { return fit_one_step(training, s, h1, h2, plan.family).coef; });
      double c = 0.0;
      double d = 0.0;
      for (auto i : folds[f]) {
        const auto& subj = dataset.subject(i);
        for (std::size_t j = 0; j < subj.sync_count(); ++j) {
          const double d1 = subj.sync_times[j] - t;
          if (!(std::fabs(d1) < h1)) continue;
          double partial = 0.0;
          bool have_partial = false;
          for (std::size_t k = 0; k < subj.async_count(); ++k) {
            const double w = eval_scaled_bi(plan.family, h1, h2, d1, subj.async_times[k] - t);
            if (w == 0.0) continue;
            if (!have_partial) {
              const Eigen::VectorXd beta = joint.at(subj.sync_times[j]).head(p);
              partial = subj.responses[j] - subj.sync_covariates.row(j).dot(beta);
              have_partial = true;
            }
            const Eigen::VectorXd gamma = joint.at(subj.async_times[k]).segment(p, q);
            const double e = partial - subj.async_covariates.row(k).dot(gamma);
            c += w * e * e;
            d += w;
          }
        }
      }
      if (d == 0.0) degenerate(f, t, "no held-out kernel mass");
      return c / d;
    }));
  }
  return out;
}

double aspe_beta(const CvPlan& plan, const LongitudinalDataset& dataset, double t, double h) {
  const CenteredDataset centered = center(dataset, h, plan.family);
  return mean(fold_ratios_beta(plan, centered, t, h));
}

double aspe_gamma(const CvPlan& plan, const LongitudinalDataset& dataset,
                  const CurveFunction& beta, double t, double h1, double h2) {
  return mean(fold_ratios_gamma(plan, dataset, beta, t, h1, h2));
}

double aspe_one_step(const CvPlan& plan, const LongitudinalDataset& dataset, double t, double h1,
                     double h2) {
  return mean(fold_ratios_one_step(plan, dataset, t, h1, h2));
}

CvResult select(const CvPlan& plan, const LongitudinalDataset& dataset, Stage stage,
                const CurveFunction* beta) {
  if (plan.candidates.empty()) {
    throw Error(ErrorCode::InvalidParameter, "no bandwidth candidates");
  }
  if (stage == Stage::SecondStage && beta == nullptr) {
    throw Error(ErrorCode::InvalidParameter,
                "second-stage selection needs the fitted first-stage beta curve");
  }
  if (stage != Stage::FirstStage && dataset.q() == 0) {
    throw Error(ErrorCode::InvalidParameter, "dataset has no asynchronous covariates");
  }
  const std::size_t C = plan.candidates.size();
  const std::size_t T = plan.eval_times.size();
  const std::size_t D = plan.fold_members().size();

  CvResult out;
  out.stage = stage;
  out.candidates = plan.candidates;
  out.aspe.assign(C, std::numeric_limits<double>::quiet_NaN());
  out.fold_aspe.assign(C, std::vector<double>(D, std::numeric_limits<double>::quiet_NaN()));
  out.notes.assign(C, std::string());

  // ratios[c][t] holds the per-fold ratios; failures recorded per candidate.
  std::vector<std::vector<std::vector<double>>> ratios(C, std::vector<std::vector<double>>(T));
  std::vector<std::string> failure(C * T);
  std::vector<std::shared_ptr<const CenteredDataset>> centered(C);
  if (stage == Stage::FirstStage) {
    parallel_for(C, plan.threads, [&](std::size_t c) {
      centered[c] = std::make_shared<const CenteredDataset>(
          center(dataset, plan.candidates[c].h1, plan.family));
    });
  }
  parallel_for(C * T, plan.threads, [&](std::size_t job) {
    const std::size_t c = job / T;
    const std::size_t k = job % T;
    const double t = plan.eval_times[k];
    const auto& cand = plan.candidates[c];
    try {
      switch (stage) {
        case Stage::FirstStage:
          ratios[c][k] = fold_ratios_beta(plan, *centered[c], t, cand.h1);
          break;
        case Stage::SecondStage:
          ratios[c][k] = fold_ratios_gamma(plan, dataset, *beta, t, cand.h1, cand.h2);
          break;
        case Stage::OneStep:
          ratios[c][k] = fold_ratios_one_step(plan, dataset, t, cand.h1, cand.h2);
          break;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::FoldDegenerate) throw;
      failure[job] = e.what();
    }
  });

  bool any = false;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < T; ++k) {
      if (!failure[c * T + k].empty()) {
        out.notes[c] = "degenerate: " + failure[c * T + k];
        break;
      }
    }
    if (!out.notes[c].empty()) continue;
    double total = 0.0;
    for (std::size_t k = 0; k < T; ++k) total += mean(ratios[c][k]);
    out.aspe[c] = total / static_cast<double>(T);
    for (std::size_t f = 0; f < D; ++f) {
      double s = 0.0;
      for (std::size_t k = 0; k < T; ++k) s += ratios[c][k][f];
      out.fold_aspe[c][f] = s / static_cast<double>(T);
    }
    // Candidates are sorted ascending, so strict improvement keeps the smallest on ties.
    if (!any || out.aspe[c] < out.aspe[out.chosen_index]) out.chosen_index = c;
    any = true;
  }
  if (!any) {
    throw Error(ErrorCode::SelectionFailed, "every bandwidth candidate was degenerate");
  }
  out.chosen = out.candidates[out.chosen_index];
  return out;
}

}  // namespace asynclc
