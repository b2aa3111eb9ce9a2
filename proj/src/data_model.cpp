#include "asynclc/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "asynclc/error.hpp"

namespace asynclc {

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool times_in_unit(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
}

}  // namespace

ValidationReport validate(std::span<const SubjectRecord> subjects, std::size_t p, std::size_t q,
                          std::size_t min_subjects) {
  ValidationReport report;
  auto add = [&](const std::string& id, const std::string& what) {
    report.violations.push_back("subject '" + id + "': " + what);
  };
  if (p == 0) report.violations.push_back("p must be at least 1");
  if (subjects.size() < min_subjects) {
    report.violations.push_back("dataset has " + std::to_string(subjects.size()) +
                                " subjects, need at least " + std::to_string(min_subjects));
  }
  for (const auto& s : subjects) {
    const std::size_t L = s.sync_times.size();
    const std::size_t M = s.async_times.size();
    if (L == 0) add(s.id, "empty response process");
    if (q > 0 && M == 0) add(s.id, "empty asynchronous covariate process");
    if (q == 0 && M > 0) add(s.id, "asynchronous times present but q = 0");
    if (s.responses.size() != L) add(s.id, "response count differs from sync time count");
    if (static_cast<std::size_t>(s.sync_covariates.rows()) != L ||
        static_cast<std::size_t>(s.sync_covariates.cols()) != p) {
      add(s.id, "sync covariates are not L_i x p");
    }
    if (static_cast<std::size_t>(s.async_covariates.rows()) != M ||
        static_cast<std::size_t>(s.async_covariates.cols()) != q) {
      add(s.id, "async covariates are not M_i x q");
    }
    if (!times_in_unit(s.sync_times) || !times_in_unit(s.async_times)) {
      add(s.id, "time outside [0,1]");
    }
    if (!all_finite(s.sync_times) || !all_finite(s.async_times) || !all_finite(s.responses) ||
        !s.sync_covariates.allFinite() || !s.async_covariates.allFinite()) {
      add(s.id, "non-finite value");
    }
  }
  return report;
}

LongitudinalDataset::LongitudinalDataset(std::vector<SubjectRecord> subjects, std::size_t p,
                                         std::size_t q, TimeScale scale,
                                         std::size_t min_subjects)
    : subjects_(std::move(subjects)), p_(p), q_(q), scale_(scale) {
  const auto report = validate(subjects_, p_, q_, min_subjects);
  if (!report.ok()) {
    std::ostringstream msg;
    msg << "invalid dataset:";
    for (const auto& v : report.violations) msg << "\n  " << v;
    throw Error(ErrorCode::InvalidData, msg.str());
  }
}

ValidationReport validate(const LongitudinalDataset& dataset) {
  return validate(dataset.subjects(), dataset.p(), dataset.q(), 1);
}

std::size_t LongitudinalDataset::total_sync() const {
  std::size_t n = 0;
  for (const auto& s : subjects_) n += s.sync_count();
  return n;
}

std::size_t LongitudinalDataset::total_pairs() const {
  std::size_t n = 0;
  for (const auto& s : subjects_) n += s.sync_count() * s.async_count();
  return n;
}

LongitudinalDataset LongitudinalDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<SubjectRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(subjects_.at(i));
  return LongitudinalDataset(std::move(out), p_, q_, scale_, 1);
}

ObservationPair PairRange::iterator::operator*() const {
  return ObservationPair{j_,
                         k_,
                         s_->sync_times[j_],
                         s_->async_times[k_],
                         s_->responses[j_],
                         s_->sync_covariates.row(j_),
                         s_->async_covariates.row(k_)};
}

PairRange::iterator& PairRange::iterator::operator++() {
  if (++k_ == s_->async_count()) {
    k_ = 0;
    ++j_;
  }
  return *this;
}

PairRange::iterator PairRange::begin() const {
  if (s_->async_count() == 0) return end();
  return iterator(s_, 0, 0);
}

PairRange::iterator PairRange::end() const { return iterator(s_, s_->sync_count(), 0); }

SyncTimeIndex::SyncTimeIndex(const LongitudinalDataset& dataset) {
  by_time_.reserve(dataset.total_sync());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.subject(i);
    for (std::size_t j = 0; j < s.sync_count(); ++j) by_time_.push_back({s.sync_times[j], i, j});
  }
  std::stable_sort(by_time_.begin(), by_time_.end(),
                   [](const Entry& a, const Entry& b) { return a.time < b.time; });
}

std::vector<SyncTimeIndex::Entry> SyncTimeIndex::window(double t, double h) const {
  auto lo = std::lower_bound(by_time_.begin(), by_time_.end(), t - h,
                             [](const Entry& e, double v) { return e.time < v; });
  std::vector<Entry> out;
  for (auto it = lo; it != by_time_.end() && it->time <= t + h; ++it) {
    if (std::fabs(it->time - t) < h) out.push_back(*it);
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    return a.subject != b.subject ? a.subject < b.subject : a.j < b.j;
  });
  return out;
}

CenteredDataset CenteredDataset::subset(std::span<const std::size_t> indices) const {
  CenteredDataset out{data.subset(indices), bandwidth, {}, {}, {}, {}};
  for (std::size_t i : indices) {
    out.mean_y.push_back(mean_y.at(i));
    out.mean_x.push_back(mean_x.at(i));
    out.centered_y.push_back(centered_y.at(i));
    out.centered_x.push_back(centered_x.at(i));
  }
  return out;
}

}  // namespace asynclc
