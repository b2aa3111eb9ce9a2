#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace asynclc {

// One subject: responses and synchronous covariates observed at sync_times,
// asynchronous covariates observed at async_times.
struct SubjectRecord {
  std::string id;
  std::vector<double> sync_times;
  std::vector<double> responses;
  Eigen::MatrixXd sync_covariates;   // L_i x p
  std::vector<double> async_times;
  Eigen::MatrixXd async_covariates;  // M_i x q

  std::size_t sync_count() const { return sync_times.size(); }
  std::size_t async_count() const { return async_times.size(); }
};

// Affine map from the study's original time axis onto [0, 1].
struct TimeScale {
  double origin = 0.0;
  double span = 1.0;

  double to_unit(double t) const { return (t - origin) / span; }
  double from_unit(double u) const { return origin + u * span; }
  bool is_identity() const { return origin == 0.0 && span == 1.0; }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(std::span<const SubjectRecord> subjects, std::size_t p, std::size_t q,
                          std::size_t min_subjects = 2);

class LongitudinalDataset {
 public:
  // Throws Error(InvalidData) listing every violation.
  LongitudinalDataset(std::vector<SubjectRecord> subjects, std::size_t p, std::size_t q,
                      TimeScale scale = {}, std::size_t min_subjects = 2);

  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  const SubjectRecord& subject(std::size_t i) const { return subjects_[i]; }
  std::size_t size() const { return subjects_.size(); }
  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }
  const TimeScale& time_scale() const { return scale_; }

  std::size_t total_sync() const;
  std::size_t total_pairs() const;

  // Subjects at the given indices, in the given order. Allows a single subject.
  LongitudinalDataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<SubjectRecord> subjects_;
  std::size_t p_;
  std::size_t q_;
  TimeScale scale_;
};

ValidationReport validate(const LongitudinalDataset& dataset);

using RowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// One (response time, covariate time) pair of a subject.
struct ObservationPair {
  std::size_t j;
  std::size_t k;
  double sync_time;
  double async_time;
  double response;
  RowRef x;
  RowRef z;
};

// All L_i * M_i pairs of a subject in lexicographic (j, k) order.
class PairRange {
 public:
  class iterator {
   public:
    using difference_type = std::ptrdiff_t;
    using value_type = ObservationPair;

    iterator(const SubjectRecord* s, std::size_t j, std::size_t k) : s_(s), j_(j), k_(k) {}
    ObservationPair operator*() const;
    iterator& operator++();
    bool operator==(const iterator& o) const { return j_ == o.j_ && k_ == o.k_; }

   private:
    const SubjectRecord* s_;
    std::size_t j_;
    std::size_t k_;
  };

  explicit PairRange(const SubjectRecord& subject) : s_(&subject) {}
  iterator begin() const;
  iterator end() const;
  std::size_t size() const { return s_->sync_count() * s_->async_count(); }

 private:
  const SubjectRecord* s_;
};

inline PairRange pairs(const SubjectRecord& subject) { return PairRange(subject); }

// Sync observations sorted by time, for windowed kernel sums. Window queries
// return entries in (subject, j) order, matching a plain nested loop.
class SyncTimeIndex {
 public:
  struct Entry {
    double time;
    std::size_t subject;
    std::size_t j;
  };

  explicit SyncTimeIndex(const LongitudinalDataset& dataset);

  // Entries with |time - t| < h, ordered by (subject, j).
  std::vector<Entry> window(double t, double h) const;

 private:
  std::vector<Entry> by_time_;
};

// Data after removing kernel mean curves from responses and sync covariates.
struct CenteredDataset {
  LongitudinalDataset data;
  double bandwidth;
  std::vector<std::vector<double>> mean_y;   // per subject, per sync obs
  std::vector<Eigen::MatrixXd> mean_x;       // per subject, L_i x p
  std::vector<std::vector<double>> centered_y;
  std::vector<Eigen::MatrixXd> centered_x;

  std::size_t size() const { return data.size(); }
  CenteredDataset subset(std::span<const std::size_t> indices) const;
};

}  // namespace asynclc
