#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "cdatt.hpp"
#include "datt.hpp"
#include "error.hpp"
#include "models.hpp"
#include "test_support.hpp"

using namespace tripdiff;
using testing::design;

namespace {

PanelDataset with_outcomes(const PanelDataset& d, const Eigen::MatrixXd& y) {
  return PanelDataset(d.unit_ids(), d.cohorts(), d.subgroups(), d.covariate_names(), d.covariates(), d.times(), y);
}

PanelDataset without_covariates(const PanelDataset& d) {
  return PanelDataset(d.unit_ids(), d.cohorts(), d.subgroups(), {},
                      Eigen::MatrixXd(static_cast<Eigen::Index>(d.size()), 0), d.times(), d.outcomes());
}

std::vector<int> labels_of(const CellIndicators& cells) {
  std::vector<int> labels;
  for (auto c : cells.cells) labels.push_back(static_cast<int>(c));
  return labels;
}

constexpr std::array<Estimator, 3> kMethods = {Estimator::IPW, Estimator::RA, Estimator::DR};

}  // namespace

TEST_CASE("weights with equal cells and no covariates are four") {
  std::vector<Cohort> cohorts;
  std::vector<std::string> sg;
  for (int i = 0; i < 40; ++i) {
    cohorts.push_back(i < 20 ? Cohort::at(2) : Cohort::never());
    sg.push_back(i % 2 == 0 ? "a" : "b");
  }
  const auto d = testing::make_panel(cohorts, sg, Eigen::MatrixXd(40, 0), {}, {1, 2}, Eigen::MatrixXd::Zero(40, 2));
  const auto cells = build_cells(d, 2, 2, design(Estimand::CDATT, Estimator::IPW));
  const Eigen::MatrixXd x(40, 0);
  const auto model = fit_multinomial_logit(x, labels_of(cells));
  const auto w = compute_cdatt_weights(cells, model, x, 0.005);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double expected[4] = {w.w1(i), w.w2(i), w.w3(i), w.w4(i)};
    const int own = static_cast<int>(cells.cells[k]);
    for (int c = 0; c < 4; ++c) CHECK(expected[c] == doctest::Approx(c == own ? 4.0 : 0.0).epsilon(1e-10));
  }
}

TEST_CASE("weights self-normalize and respect cell support") {
  const auto d = testing::random_panel(3, 2000, 3);
  const auto cells = build_cells(d, 2, 2, design(Estimand::CDATT, Estimator::IPW));
  const Eigen::MatrixXd x = d.covariates();
  const auto model = fit_multinomial_logit(x, labels_of(cells));
  const auto w = compute_cdatt_weights(cells, model, x, 0.005);
  const Eigen::VectorXd* all[4] = {&w.w1, &w.w2, &w.w3, &w.w4};
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(all[c]->mean() - 1.0) < 1e-10);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (static_cast<int>(cells.cells[k]) != c) CHECK((*all[c])(static_cast<Eigen::Index>(k)) == 0.0);
    }
  }
  CHECK(w.max_weight > 0.0);
}

TEST_CASE("weights match a two-stratum frequency oracle") {
  // binary covariate: the saturated logit reproduces stratum frequencies, so
  // the weight of a row in cell c is n_1(b)/n_c(b) up to normalization
  Philox4x32 rng(12);
  const int n = 4000;
  std::vector<Cohort> cohorts;
  std::vector<std::string> sg;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) {
    const int b = rng.bernoulli(0.5) ? 1 : 0;
    x(i, 0) = b;
    cohorts.push_back(rng.bernoulli(b ? 0.6 : 0.3) ? Cohort::at(2) : Cohort::never());
    sg.push_back(rng.bernoulli(b ? 0.3 : 0.55) ? "a" : "b");
  }
  const auto d = testing::make_panel(cohorts, sg, x, {"b"}, {1, 2}, Eigen::MatrixXd::Zero(n, 2));
  const auto cells = build_cells(d, 2, 2, design(Estimand::CDATT, Estimator::IPW, {"b"}));
  std::array<std::array<double, 4>, 2> count{};
  for (std::size_t k = 0; k < cells.size(); ++k) {
    count[static_cast<std::size_t>(x(static_cast<Eigen::Index>(k), 0))][static_cast<std::size_t>(cells.cells[k])] += 1;
  }
  const auto w = compute_cdatt_weights(cells, fit_multinomial_logit(x, labels_of(cells)), x, 0.005);
  const Eigen::VectorXd* all[4] = {&w.w1, &w.w2, &w.w3, &w.w4};
  for (int c = 1; c < 4; ++c) {
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (static_cast<int>(cells.cells[k]) != c) continue;
      const auto b = static_cast<std::size_t>(x(static_cast<Eigen::Index>(k), 0));
      raw(static_cast<Eigen::Index>(k)) = count[b][0] / count[b][static_cast<std::size_t>(c)];
    }
    raw /= raw.mean();
    CHECK((raw - *all[c]).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("trimming rejects propensities below the threshold") {
  const auto d = testing::random_panel(3, 500, 1);
  const auto cells = build_cells(d, 2, 2, design(Estimand::CDATT, Estimator::IPW));
  const Eigen::MatrixXd x = d.covariates();
  const auto model = fit_multinomial_logit(x, labels_of(cells));
  CHECK_THROWS_AS(compute_cdatt_weights(cells, model, x, 0.3), TrimError);
}

TEST_CASE("no outcome change gives zero") {
  auto d = testing::random_panel(4, 800, 2);
  Eigen::MatrixXd y = d.outcomes();
  y.col(1) = y.col(0);
  d = with_outcomes(d, y);
  for (auto m : kMethods) {
    const auto e = estimate_cdatt(d, 2, 2, design(Estimand::CDATT, m, {"x1", "x2"}), m);
    CHECK(std::abs(e.estimate) < 1e-10);
  }
}

TEST_CASE("intercept-only CDATT equals the unadjusted triple difference") {
  const auto d = without_covariates(testing::random_panel(5, 1200, 2, 0.4));
  const double oracle = testing::triple_difference(testing::cell_means(d, 2, 2, "a", "b"));
  for (auto m : kMethods) {
    const auto e = estimate_cdatt(d, 2, 2, design(Estimand::CDATT, m), m);
    CHECK(std::abs(e.estimate - oracle) < 1e-8);
  }
}

TEST_CASE("location invariance and scale equivariance") {
  const auto d = testing::random_panel(6, 1500, 2, 0.2);
  const auto shifted = with_outcomes(d, (d.outcomes().array() + 50.0).matrix());
  const auto scaled = with_outcomes(d, (d.outcomes() * 3.0).eval());
  for (auto m : kMethods) {
    const auto spec = design(Estimand::CDATT, m, {"x1", "x2"});
    const auto base = estimate_cdatt(d, 2, 2, spec, m);
    const auto s = estimate_cdatt(shifted, 2, 2, spec, m);
    CHECK(std::abs(s.estimate - base.estimate) < 1e-10);
    CHECK(std::abs(s.se - base.se) < 1e-10);
    const auto c = estimate_cdatt(scaled, 2, 2, spec, m);
    CHECK(c.estimate == doctest::Approx(3.0 * base.estimate).epsilon(1e-10));
    CHECK(c.se == doctest::Approx(3.0 * base.se).epsilon(1e-10));
  }
}

TEST_CASE("DR CDATT recovers a conditional effect") {
  const auto base = testing::random_panel(7, 20000, 2);
  Eigen::MatrixXd y = base.outcomes();
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!base.cohorts()[i].is_never() && base.subgroups()[i] == "a") y(r, 1) += 0.5 + 0.2 * base.covariates()(r, 0);
  }
  const auto d = with_outcomes(base, y);
  const auto e = estimate_cdatt(d, 2, 2, design(Estimand::CDATT, Estimator::DR, {"x1", "x2"}), Estimator::DR);
  // truth: 0.5 + 0.2 * E[x1 | treated, a]
  double sx = 0, count = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!base.cohorts()[i].is_never() && base.subgroups()[i] == "a") {
      sx += base.covariates()(static_cast<Eigen::Index>(i), 0);
      count += 1;
    }
  }
  CHECK(std::abs(e.estimate - (0.5 + 0.2 * sx / count)) < 4.0 * e.se);
  CHECK(std::abs(e.influence.values.mean()) < 1e-8);
}

TEST_CASE("repeated cross-section: affine outcomes without effect give zero") {
  Philox4x32 rng(9);
  const int n = 3000;
  std::vector<int> times;
  std::vector<Cohort> cohorts;
  std::vector<std::string> sg;
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    const int t = rng.bernoulli(0.5) ? 2 : 1;
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    const bool treated = rng.bernoulli(0.4);
    const bool focal = rng.bernoulli(0.5);
    times.push_back(t);
    cohorts.push_back(treated ? Cohort::at(2) : Cohort::never());
    sg.push_back(focal ? "a" : "b");
    y(i) = 2.0 + 0.7 * t + (treated ? 0.3 : 0.0) + (focal ? -0.4 : 0.0) + 1.5 * x(i, 0) - 0.5 * x(i, 1);
  }
  const RepeatedCrossSection rc(times, y, cohorts, sg, {"x1", "x2"}, x);
  const auto e = estimate_cdatt_rc(rc, 2, 2, design(Estimand::CDATT, Estimator::DR, {"x1", "x2"}));
  CHECK(std::abs(e.estimate) < 1e-8);
  CHECK(e.repeated_cross_section);
  CHECK_THROWS_AS(estimate_cdatt_rc(rc, 2, 2, design(Estimand::CDATT, Estimator::IPW, {"x1"})), UsageError);
}

TEST_CASE("a flattened panel without covariates matches the panel triple difference") {
  const auto d = without_covariates(testing::random_panel(10, 1000, 2, 0.3));
  const auto panel = estimate_datt_unadjusted(d, 2, 2, design(Estimand::DATT, Estimator::Unadjusted));
  const auto rc = estimate_cdatt_rc(flatten_to_repeated_cross_section(d), 2, 2,
                                    design(Estimand::CDATT, Estimator::DR));
  CHECK(std::abs(rc.estimate - panel.estimate) < 1e-8);
}

TEST_CASE("ATT recovery under an unaffected comparison subgroup") {
  EffectEstimate datt;
  datt.estimand = Estimand::DATT;
  datt.estimate = 0.5;
  datt.se = 0.1;
  datt.influence.values = Eigen::VectorXd::Constant(4, 1.0);
  const auto [att_s, att_pop] = recover_att_unaffected(datt, 0.5, 0.5);
  CHECK(att_s.estimate == 0.5);
  CHECK(att_s.scope == "subgroup");
  CHECK(att_pop.estimate == 0.25);
  CHECK(att_pop.se == doctest::Approx(0.05));
  CHECK(att_pop.scope == "population");

  datt.estimate = 0.0;
  CHECK(recover_att_unaffected(datt, 0.3, 0.7).second.estimate == 0.0);
  CHECK_THROWS_AS(recover_att_unaffected(datt, 1.0, 0.0), UsageError);
  datt.estimand = Estimand::CDATT;
  CHECK_THROWS_AS(recover_att_unaffected(datt, 0.5, 0.5), UsageError);
}

TEST_CASE("monotone-selection lower bound") {
  EffectEstimate datt;
  datt.estimand = Estimand::DATT;
  datt.estimate = 0.5;
  datt.se = 0.1;
  const auto b = mts_lower_bound(datt);
  CHECK(b.one_sided);
  CHECK(b.ci_lower == doctest::Approx(0.3355).epsilon(1e-4));
  CHECK(b.ci_upper == std::numeric_limits<double>::infinity());
  datt.estimate = 0.0;
  CHECK(mts_lower_bound(datt).ci_lower == doctest::Approx(-1.6449 * 0.1).epsilon(1e-4));
}
