#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cdatt.hpp"
#include "error.hpp"
#include "inference.hpp"
#include "test_support.hpp"

using namespace tripdiff;

namespace {

InfluenceVector influence_of(std::vector<double> values, std::vector<std::size_t> rows, std::size_t population) {
  InfluenceVector iv;
  iv.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  iv.rows = std::move(rows);
  iv.population = population;
  return iv;
}

EffectEstimate effect_with(InfluenceVector iv, double estimate, int g, int t) {
  EffectEstimate e;
  e.estimand = Estimand::CDATT;
  e.estimator = Estimator::DR;
  e.g = g;
  e.t = t;
  e.estimate = estimate;
  e.influence = std::move(iv);
  attach_inference(e);
  return e;
}

}  // namespace

TEST_CASE("standard error from an influence vector") {
  const auto se = standard_error_ci(influence_of({1.0, -1.0}, {0, 1}, 2), 0.0, 0.95);
  CHECK(se.se == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(se.upper == doctest::Approx(1.959964 * std::sqrt(0.5)).epsilon(1e-6));
  CHECK(se.lower == doctest::Approx(-se.upper));
  CHECK_FALSE(se.degenerate);

  CHECK(standard_error_ci(influence_of({0.0, 0.0, 0.0}, {0, 1, 2}, 3), 1.0, 0.95).degenerate);
  CHECK_THROWS_AS(standard_error_ci(influence_of({1.0}, {0}, 1), 0.0, 0.95), UsageError);
  CHECK_THROWS_AS(standard_error_ci(influence_of({1.0, NAN}, {0, 1}, 2), 0.0, 0.95), NumericalError);
  CHECK_THROWS_AS(normal_critical_value(1.5), UsageError);
  CHECK(normal_one_sided_critical_value(0.95) == doctest::Approx(1.644854).epsilon(1e-6));
}

TEST_CASE("DR variance matches the closed-form four-cell variance") {
  // no covariates, equal cells with the same spread and a zero triple difference
  const int per_cell = 50;
  const int n = 4 * per_cell;
  std::vector<Cohort> cohorts;
  std::vector<std::string> sg;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, 2);
  const double sigma = 0.8;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < per_cell; ++i) {
      const int r = c * per_cell + i;
      cohorts.push_back(c < 2 ? Cohort::at(2) : Cohort::never());
      sg.push_back(c % 2 == 0 ? "a" : "b");
      y(r, 1) = 1.0 + (i % 2 == 0 ? sigma : -sigma);
    }
  }
  const auto d = testing::make_panel(cohorts, sg, Eigen::MatrixXd(n, 0), {}, {1, 2}, y);
  const auto e = estimate_cdatt(d, 2, 2, testing::design(Estimand::CDATT, Estimator::DR), Estimator::DR);
  CHECK(std::abs(e.estimate) < 1e-12);
  // each cell mean has variance sigma^2 / n_c, and the contrast sums four of them
  const double oracle = 4.0 * sigma * sigma / per_cell;
  CHECK(e.se * e.se == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("constant outcome change yields a zero influence vector") {
  auto base = testing::random_panel(2, 400, 0);
  Eigen::MatrixXd y = base.outcomes();
  y.col(1) = y.col(0).array() + 2.5;
  const PanelDataset d(base.unit_ids(), base.cohorts(), base.subgroups(), {}, base.covariates(), base.times(), y);
  const auto e = estimate_cdatt(d, 2, 2, testing::design(Estimand::CDATT, Estimator::DR), Estimator::DR);
  CHECK(e.influence.values.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(e.se < 1e-12);
}

TEST_CASE("DR influence terms are centred and add up") {
  Philox4x32 rng(4);
  const int n = 400;
  DrInfluenceInputs in;
  in.delta_y.resize(n);
  for (auto* v : {&in.w1, &in.w2, &in.w3, &in.w4, &in.m_treated_focal, &in.m_treated_other, &in.m_comparison_focal,
                  &in.m_comparison_other}) {
    v->setZero(n);
  }
  for (int i = 0; i < n; ++i) {
    const auto cell = static_cast<Cell>(i % 4);
    in.cells.push_back(cell);
    in.delta_y(i) = rng.normal();
    in.m_treated_focal(i) = rng.normal();
    in.m_treated_other(i) = rng.normal();
    in.m_comparison_focal(i) = rng.normal();
    in.m_comparison_other(i) = rng.normal();
    Eigen::VectorXd* w[4] = {&in.w1, &in.w2, &in.w3, &in.w4};
    (*w[i % 4])(i) = 0.5 + rng.uniform();
  }
  for (auto* v : {&in.w1, &in.w2, &in.w3, &in.w4}) *v /= v->mean();
  const auto terms = dr_influence_terms(in);
  CHECK(std::abs(terms.treated_other.mean()) < 1e-12);
  CHECK(std::abs(terms.comparison_focal.mean()) < 1e-12);
  CHECK(std::abs(terms.comparison_other.mean()) < 1e-12);
  CHECK(std::abs((terms.treated_focal + terms.phi + terms.psi).mean()) < 1e-12);
  const Eigen::VectorXd sum = terms.treated_focal + terms.treated_other + terms.comparison_focal +
                              terms.comparison_other + terms.phi + terms.psi;
  CHECK((sum - terms.total).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aggregation") {
  const auto a = effect_with(influence_of({1.0, -1.0}, {0, 1}, 4), 0.2, 2, 2);
  const auto b = effect_with(influence_of({2.0, -2.0}, {2, 3}, 4), 0.6, 2, 3);

  SUBCASE("a single component is the identity") {
    const auto agg = aggregate_group_time({{&a, 1.0}});
    CHECK(agg.estimate == a.estimate);
    CHECK(agg.se == doctest::Approx(a.se).epsilon(1e-14));
  }
  SUBCASE("disjoint components with equal weights") {
    const auto agg = aggregate_group_time({{&a, 0.5}, {&b, 0.5}});
    CHECK(agg.estimate == doctest::Approx(0.4));
    CHECK(agg.se * agg.se == doctest::Approx((a.se * a.se + b.se * b.se) / 4.0).epsilon(1e-14));
    CHECK(agg.components.size() == 2);
  }
  SUBCASE("overlapping components add covariance") {
    const auto c = effect_with(influence_of({1.0, -1.0}, {0, 1}, 4), 0.4, 3, 3);
    const auto agg = aggregate_group_time({{&a, 0.5}, {&c, 0.5}});
    // perfectly correlated: SE is the average SE
    CHECK(agg.se == doctest::Approx(0.5 * (a.se + c.se)).epsilon(1e-14));
    CHECK(influence_covariance(a, c) == doctest::Approx(a.se * c.se).epsilon(1e-14));
    CHECK(influence_covariance(a, b) == 0.0);
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(aggregate_group_time({}), UsageError);
    CHECK_THROWS_AS(aggregate_group_time({{&a, 0.5}, {&b, 0.4}}), UsageError);
    CHECK_THROWS_AS(aggregate_group_time({{&a, 1.5}, {&b, -0.5}}), UsageError);
    auto other = b;
    other.estimator = Estimator::IPW;
    CHECK_THROWS_AS(aggregate_group_time({{&a, 0.5}, {&other, 0.5}}), UsageError);
    auto fe = b;
    fe.influence.observation_level = true;
    CHECK_THROWS_AS(aggregate_group_time({{&a, 0.5}, {&fe, 0.5}}), UsageError);
  }
}
