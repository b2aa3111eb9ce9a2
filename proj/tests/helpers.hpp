#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "asynclc/data_model.hpp"

namespace testing {

// Single-column X and Z.
inline asynclc::SubjectRecord subject(std::string id, std::vector<double> sync_times,
                                      std::vector<double> y, std::vector<double> x,
                                      std::vector<double> async_times = {},
                                      std::vector<double> z = {}) {
  asynclc::SubjectRecord s;
  s.id = std::move(id);
  s.sync_times = std::move(sync_times);
  s.responses = std::move(y);
  s.sync_covariates = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  s.async_times = std::move(async_times);
  s.async_covariates.resize(static_cast<Eigen::Index>(z.size()), z.empty() ? 0 : 1);
  for (std::size_t k = 0; k < z.size(); ++k) s.async_covariates(static_cast<Eigen::Index>(k), 0) = z[k];
  return s;
}

inline asynclc::LongitudinalDataset toy_pair() {
  return asynclc::LongitudinalDataset(
      {subject("a", {0.1, 0.4, 0.7}, {1.0, 2.0, 1.5}, {0.3, -0.2, 0.8}, {0.2, 0.5}, {1.0, -1.0}),
       subject("b", {0.3, 0.6}, {0.5, -0.5}, {1.1, 0.4}, {0.35, 0.45, 0.9}, {0.2, 0.7, -0.3})},
      1, 1);
}

}  // namespace testing
