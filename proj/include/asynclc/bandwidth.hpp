#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asynclc/data_model.hpp"
#include "asynclc/estimators.hpp"
#include "asynclc/kernels.hpp"

namespace asynclc {

enum class Stage { FirstStage, SecondStage, OneStep };

const char* stage_name(Stage stage);

// First-stage candidates use h1 only (h2 mirrors it).
struct CvCandidate {
  double h1 = 0.0;
  double h2 = 0.0;

  friend bool operator==(const CvCandidate&, const CvCandidate&) = default;
};

struct CvPlan {
  std::size_t folds = 5;
  std::vector<CvCandidate> candidates;
  // A single time gives the pointwise criterion; several give the integrated one.
  std::vector<double> eval_times;
  std::uint64_t seed = 1;
  std::vector<std::size_t> fold_of_subject;
  KernelFamily family = KernelFamily::Epanechnikov;
  std::size_t threads = 1;

  // Subject indices of each fold, folds ordered by their smallest subject so
  // that relabelling the same partition changes nothing.
  std::vector<std::vector<std::size_t>> fold_members() const;
};

// Validates and normalizes: candidates sorted and deduplicated, subjects
// shuffled with `seed` and dealt round-robin into `folds` groups.
CvPlan make_plan(std::size_t n_subjects, std::size_t folds, std::vector<CvCandidate> candidates,
                 std::vector<double> eval_times, std::uint64_t seed = 1);

// Same, with an explicit fold label per subject (labels need not be contiguous).
CvPlan make_plan_with_folds(std::vector<std::size_t> fold_of_subject,
                            std::vector<CvCandidate> candidates, std::vector<double> eval_times);

// Eight log-spaced candidates strictly inside the stage's range:
// (n^-0.8, n^-0.6) for the first stage, (n^-0.5, n^-0.4) with h1 = h2 otherwise.
std::vector<CvCandidate> default_candidates(Stage stage, std::size_t n);

// Nine times on [0.1, 0.9] for the integrated criterion.
std::vector<double> default_eval_times();

CvPlan default_plan(Stage stage, std::size_t n, std::uint64_t seed = 1);

// Per-fold ratios A_k / B_k (beta), C_k / D_k (gamma, one-step), in fold_members() order.
// A fold with no kernel mass at t, or whose training fit fails, throws FoldDegenerate.
std::vector<double> fold_ratios_beta(const CvPlan& plan, const CenteredDataset& centered,
                                     double t, double h);
std::vector<double> fold_ratios_gamma(const CvPlan& plan, const LongitudinalDataset& dataset,
                                      const CurveFunction& beta, double t, double h1, double h2);
std::vector<double> fold_ratios_one_step(const CvPlan& plan, const LongitudinalDataset& dataset,
                                         double t, double h1, double h2);

double aspe_beta(const CvPlan& plan, const LongitudinalDataset& dataset, double t, double h);
double aspe_gamma(const CvPlan& plan, const LongitudinalDataset& dataset,
                  const CurveFunction& beta, double t, double h1, double h2);
double aspe_one_step(const CvPlan& plan, const LongitudinalDataset& dataset, double t, double h1,
                     double h2);

struct CvResult {
  Stage stage = Stage::FirstStage;
  std::vector<CvCandidate> candidates;
  std::vector<double> aspe;                    // NaN for degenerate candidates
  std::vector<std::vector<double>> fold_aspe;  // per candidate, per fold; averaged over times
  std::vector<std::string> notes;              // empty when the candidate was usable
  std::size_t chosen_index = 0;
  CvCandidate chosen;
};

// `beta` is required for SecondStage: the first-stage bandwidth must be chosen
// and its curve fitted before the second stage is selected.
CvResult select(const CvPlan& plan, const LongitudinalDataset& dataset, Stage stage,
                const CurveFunction* beta = nullptr);

}  // namespace asynclc
