#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "rng.hpp"

namespace testing {

using tripdiff::Cohort;
using tripdiff::PanelDataset;

inline PanelDataset make_panel(const std::vector<Cohort>& cohorts, const std::vector<std::string>& subgroups,
                               const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                               const std::vector<int>& times, const Eigen::MatrixXd& y) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < cohorts.size(); ++i) ids.push_back("u" + std::to_string(i));
  return PanelDataset(ids, cohorts, subgroups, names, x, times, y);
}

// Two periods, cohorts {2, never}, subgroups {a, b}, k standard normal
// covariates. Outcomes depend on X and the cell so that every estimator has
// something to do; `effect` is added to treated units in period 2.
inline PanelDataset random_panel(std::uint64_t seed, std::size_t n, int k, double effect = 0.0) {
  tripdiff::Philox4x32 rng(seed);
  std::vector<Cohort> cohorts;
  std::vector<std::string> subgroups;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), k);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
  std::vector<std::string> names;
  for (int j = 0; j < k; ++j) names.push_back("x" + std::to_string(j + 1));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    double index = 0.0;
    for (int j = 0; j < k; ++j) {
      x(r, j) = rng.normal();
      index += 0.3 * x(r, j) / (j + 1);
    }
    const bool treated = rng.uniform() < 1.0 / (1.0 + std::exp(-index));
    const bool focal = rng.uniform() < 1.0 / (1.0 + std::exp(0.5 * index));
    cohorts.push_back(treated ? Cohort::at(2) : Cohort::never());
    subgroups.push_back(focal ? "a" : "b");
    const double base = 1.0 + index + (focal ? 0.4 : 0.0) + (treated ? 0.2 : 0.0);
    y(r, 0) = base + rng.normal();
    y(r, 1) = base + 0.3 + 0.5 * index + (treated ? effect : 0.0) + rng.normal();
  }
  return make_panel(cohorts, subgroups, x, names, {1, 2}, y);
}

// Cell means of dY in the order (treated a, treated b, comparison a,
// comparison b), computed independently of the library.
inline std::array<double, 4> cell_means(const PanelDataset& d, int g, int t, const std::string& s,
                                        const std::string& sp) {
  std::array<double, 4> sum{}, count{};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& c = d.cohorts()[i];
    const bool treated = !c.is_never() && c.period() == g;
    const bool comparison = c.is_never();
    const auto& sg = d.subgroups()[i];
    if (!(treated || comparison) || (sg != s && sg != sp)) continue;
    const int cell = (treated ? 0 : 2) + (sg == s ? 0 : 1);
    sum[cell] += d.outcome(i, t) - d.outcome(i, g - 1);
    count[cell] += 1;
  }
  for (int c = 0; c < 4; ++c) sum[c] /= count[c];
  return sum;
}

inline double triple_difference(const std::array<double, 4>& m) { return (m[0] - m[1]) - (m[2] - m[3]); }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tripdiff_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline tripdiff::DesignSpec design(tripdiff::Estimand estimand, tripdiff::Estimator estimator,
                                   std::vector<std::string> covariates = {}) {
  tripdiff::DesignSpec spec;
  spec.estimand = estimand;
  spec.estimator = estimator;
  spec.focal = "a";
  spec.other = "b";
  spec.covariates = std::move(covariates);
  return spec;
}

}  // namespace testing
