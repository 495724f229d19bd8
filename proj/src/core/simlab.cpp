#include "simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "csv.hpp"
#include "error.hpp"
#include "inference.hpp"
#include "pipeline.hpp"
#include "rng.hpp"

namespace tripdiff {

using nlohmann::json;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One row of the built-in covariate generator, in synthetic_covariate_names()
// order. Draw order is part of the reproducibility contract.
void draw_synthetic_row(Philox4x32& rng, double* row) {
  const double educ = std::clamp(std::round(13.0 + 2.5 * rng.normal()), 8.0, 20.0);
  const double age = static_cast<double>(rng.uniform_int(20, 40));
  const double age_c = (age - 30.0) / 10.0;
  const double white = rng.bernoulli(0.82) ? 1.0 : 0.0;
  const double union_member = rng.bernoulli(logistic(-1.2 - 0.05 * (educ - 13.0))) ? 1.0 : 0.0;
  const double whitecollar = rng.bernoulli(logistic(-0.2 + 0.2 * (educ - 13.0))) ? 1.0 : 0.0;
  row[0] = educ;
  row[1] = age;
  row[2] = age_c;
  row[3] = age_c * age_c;
  row[4] = (age >= 30 && age <= 34) ? 1.0 : 0.0;
  row[5] = age >= 35 ? 1.0 : 0.0;
  row[6] = white;
  row[7] = union_member;
  row[8] = whitecollar;
}

struct CovariateTable {
  std::vector<std::string> names;
  Eigen::MatrixXd rows;  // empty for the built-in generator
};

const CovariateTable& covariate_table(const std::string& path) {
  static std::mutex mutex;
  static std::map<std::string, CovariateTable> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(path);
  if (it != cache.end()) return it->second;
  CovariateTable table;
  if (path.empty()) {
    table.names = synthetic_covariate_names();
  } else {
    const auto raw = csv::read(path);
    table.names = raw.header;
    table.rows.resize(static_cast<Eigen::Index>(raw.rows.size()), static_cast<Eigen::Index>(raw.header.size()));
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      for (std::size_t c = 0; c < raw.header.size(); ++c) {
        const auto v = csv::parse_double(raw.rows[r][c]);
        if (!v) throw ParseError(raw.lines[r], "covariate table " + path + ": non-numeric value in column '" +
                                                   raw.header[c] + "' at line " + std::to_string(raw.lines[r]));
        table.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
      }
    }
    if (table.rows.rows() == 0) throw DataError("covariate table " + path + " has no rows");
  }
  return cache.emplace(path, std::move(table)).first->second;
}

std::vector<Eigen::Index> column_positions(const CovariateTable& table, const std::vector<std::string>& names) {
  std::vector<Eigen::Index> out;
  for (const auto& name : names) {
    auto it = std::find(table.names.begin(), table.names.end(), name);
    if (it == table.names.end()) throw SchemaError("covariate '" + name + "' is not provided by the covariate source");
    out.push_back(static_cast<Eigen::Index>(it - table.names.begin()));
  }
  return out;
}

// n rows of the full covariate table, drawn from `rng`.
Eigen::MatrixXd draw_covariates(const CovariateTable& table, std::size_t n, Philox4x32& rng) {
  const auto cols = static_cast<Eigen::Index>(table.names.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), cols);
  if (table.rows.size() == 0) {
    Eigen::Matrix<double, 1, Eigen::Dynamic> row(cols);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      draw_synthetic_row(rng, row.data());
      out.row(i) = row;
    }
  } else {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      out.row(i) = table.rows.row(rng.uniform_int(0, table.rows.rows() - 1));
    }
  }
  return out;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Cell probabilities (TF, TO, CF, CO) for each covariate row.
Eigen::MatrixXd cell_probabilities(const DgpSpec& spec, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd eta(x.rows(), 4);
  eta.col(0) = x * as_vector(spec.alpha_ws);
  eta.col(1) = x * as_vector(spec.alpha_wsp);
  eta.col(2) = x * as_vector(spec.alpha_cs);
  eta.col(3).setZero();
  Eigen::MatrixXd p(x.rows(), 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = eta.row(i).maxCoeff();
    const Eigen::RowVector4d e = (eta.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

std::string key_of(const DgpSpec& spec) { return dgp_to_json(spec); }

}  // namespace

std::vector<std::string> synthetic_covariate_names() {
  return {"educ", "age", "age_c", "age_c2", "age_30_34", "age_35_40", "white", "union", "whitecollar"};
}

Eigen::MatrixXd synthetic_covariates(std::size_t n, std::uint64_t seed) {
  Philox4x32 rng(seed);
  return draw_covariates(covariate_table(""), n, rng);
}

void DgpSpec::validate() const {
  const auto k = covariates.size();
  if (k == 0) throw UsageError("DGP needs at least one covariate");
  if (alpha_ws.size() != k || alpha_wsp.size() != k || alpha_cs.size() != k || beta.size() != k) {
    throw UsageError("DGP coefficient arity does not match the " + std::to_string(k) + " covariates");
  }
  if (!(gamma >= 0.0)) throw UsageError("DGP gamma must be >= 0");
  if (n < 100) throw UsageError("DGP sample size must be at least 100");
  if (!(sigma_u >= 0.0)) throw UsageError("DGP sigma_u must be >= 0");
  if (!(nu_range[0] <= nu_range[1])) throw UsageError("DGP nu range must be ordered");
  if (truth_draws < 1000) throw UsageError("DGP truth_draws must be at least 1000");
}

std::vector<std::pair<int, int>> DgpSpec::pairs() const {
  if (staggered) return {{2, 2}, {2, 3}, {3, 3}};
  return {{2, 2}};
}

DgpSpec default_dgp() {
  DgpSpec spec;
  spec.alpha_ws = {0.0, 0.3, -0.2, -0.3, 0.8, 0.8};
  spec.alpha_wsp = {0.0, -0.3, 0.1, 0.2, -0.8, -0.8};
  spec.alpha_cs = {0.0, 0.2, -0.1, -0.1, 0.4, 0.4};
  spec.beta = {0.06, 0.15, -0.08, 0.10, 0.35, 0.45};
  return spec;
}

std::string dgp_to_json(const DgpSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["n"] = spec.n;
  j["covariates_csv"] = spec.covariates_csv;
  j["covariates"] = spec.covariates;
  j["alpha_ws"] = spec.alpha_ws;
  j["alpha_wsp"] = spec.alpha_wsp;
  j["alpha_cs"] = spec.alpha_cs;
  j["beta0"] = spec.beta0;
  j["beta"] = spec.beta;
  j["sigma_u"] = spec.sigma_u;
  j["effect"] = spec.effect ? "heterogeneous" : "none";
  j["gamma"] = spec.gamma;
  j["ps_wrong"] = spec.ps_wrong;
  j["or_wrong"] = spec.or_wrong;
  j["nu_range"] = spec.nu_range;
  j["misspecified_column"] = spec.misspecified_column;
  j["design"] = spec.staggered ? "staggered" : "two_period";
  j["sampling"] = spec.repeated_cross_section ? "repeated_cross_section" : "panel";
  j["truth_seed"] = spec.truth_seed;
  j["truth_draws"] = spec.truth_draws;
  return j.dump();
}

DgpSpec dgp_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("DGP spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("DGP spec must be a JSON object");
  DgpSpec spec = default_dgp();
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "name") spec.name = v.get<std::string>();
      else if (key == "n") spec.n = v.get<std::size_t>();
      else if (key == "covariates_csv") spec.covariates_csv = v.get<std::string>();
      else if (key == "covariates") spec.covariates = v.get<std::vector<std::string>>();
      else if (key == "alpha_ws") spec.alpha_ws = v.get<std::vector<double>>();
      else if (key == "alpha_wsp") spec.alpha_wsp = v.get<std::vector<double>>();
      else if (key == "alpha_cs") spec.alpha_cs = v.get<std::vector<double>>();
      else if (key == "beta0") spec.beta0 = v.get<double>();
      else if (key == "beta") spec.beta = v.get<std::vector<double>>();
      else if (key == "sigma_u") spec.sigma_u = v.get<double>();
      else if (key == "effect") {
        const auto s = v.get<std::string>();
        if (s != "heterogeneous" && s != "none") throw UsageError("DGP effect must be 'heterogeneous' or 'none'");
        spec.effect = s == "heterogeneous";
      } else if (key == "gamma") spec.gamma = v.get<double>();
      else if (key == "ps_wrong") spec.ps_wrong = v.get<bool>();
      else if (key == "or_wrong") spec.or_wrong = v.get<bool>();
      else if (key == "nu_range") spec.nu_range = v.get<std::array<double, 2>>();
      else if (key == "misspecified_column") spec.misspecified_column = v.get<std::string>();
      else if (key == "design") {
        const auto s = v.get<std::string>();
        if (s != "staggered" && s != "two_period") throw UsageError("DGP design must be 'two_period' or 'staggered'");
        spec.staggered = s == "staggered";
      } else if (key == "sampling") {
        const auto s = v.get<std::string>();
        if (s != "panel" && s != "repeated_cross_section") {
          throw UsageError("DGP sampling must be 'panel' or 'repeated_cross_section'");
        }
        spec.repeated_cross_section = s == "repeated_cross_section";
      } else if (key == "truth_seed") spec.truth_seed = v.get<std::uint64_t>();
      else if (key == "truth_draws") spec.truth_draws = v.get<std::size_t>();
      else throw UsageError("unknown DGP spec key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("DGP spec has a value of the wrong type: ") + e.what());
  }
  spec.validate();
  return spec;
}

Eigen::VectorXd misspecify_covariates(const Eigen::VectorXd& x, double nu) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > -1.0)) throw UsageError("misspecified design needs x > -1 (got " + csv::format_double(x(i)) + ")");
    const double sign = x(i) > 0.0 ? 1.0 : (x(i) < 0.0 ? -1.0 : 0.0);
    out(i) = std::log(x(i) + 1.0) + sign * std::pow(std::abs(x(i)), nu);
  }
  return out;
}

Eigen::VectorXd misspecify_covariates(const Eigen::VectorXd& x, std::uint64_t seed, std::array<double, 2> range) {
  Philox4x32 rng(seed);
  const double nu = range[0] + (range[1] - range[0]) * rng.uniform();
  return misspecify_covariates(x, nu);
}

TruthRecord dgp_truth(const DgpSpec& spec) {
  static std::mutex mutex;
  static std::map<std::string, TruthRecord> cache;
  const auto key = key_of(spec);
  {
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  spec.validate();
  TruthRecord truth;
  if (spec.effect) {
    const auto& table = covariate_table(spec.covariates_csv);
    const auto cols = column_positions(table, spec.covariates);
    Eigen::MatrixXd full;
    if (table.rows.size() == 0) {
      Philox4x32 rng(spec.truth_seed);
      full = draw_covariates(table, spec.truth_draws, rng);
    } else {
      full = table.rows;  // rows are resampled uniformly, so the table is the population
    }
    Eigen::MatrixXd x(full.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) x.col(static_cast<Eigen::Index>(c)) = full.col(cols[c]);
    const Eigen::MatrixXd p = cell_probabilities(spec, x);
    const Eigen::VectorXd bx = x * as_vector(spec.beta);
    truth.datt = p.col(0).dot(bx) / p.col(0).sum() - p.col(1).dot(bx) / p.col(1).sum();
  }
  std::lock_guard lock(mutex);
  cache.emplace(key, truth);
  return truth;
}

Trial generate_trial(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Philox4x32 rng(seed);
  const auto& table = covariate_table(spec.covariates_csv);
  const auto cols = column_positions(table, spec.covariates);
  const auto miss = column_positions(table, {spec.misspecified_column}).front();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const int periods = spec.periods();

  const double nu = spec.nu_range[0] + (spec.nu_range[1] - spec.nu_range[0]) * rng.uniform();
  const Eigen::MatrixXd full = draw_covariates(table, spec.n, rng);
  const auto k = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd x(n, k + 1);
  for (Eigen::Index c = 0; c < k; ++c) x.col(c) = full.col(cols[static_cast<std::size_t>(c)]);
  x.col(k) = misspecify_covariates(full.col(miss), nu);

  const Eigen::MatrixXd p = cell_probabilities(spec, x.leftCols(k));
  std::vector<Cohort> cohorts;
  std::vector<std::string> subgroups;
  std::vector<bool> treated(static_cast<std::size_t>(n));
  cohorts.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int cell = 3;
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      acc += p(i, c);
      if (u < acc) {
        cell = c;
        break;
      }
    }
    const bool is_treated = cell <= 1;
    treated[static_cast<std::size_t>(i)] = is_treated;
    if (is_treated) {
      cohorts.push_back(Cohort::at(spec.staggered ? (rng.bernoulli(0.5) ? 2 : 3) : 2));
    } else {
      cohorts.push_back(Cohort::never());
    }
    subgroups.emplace_back(cell == 0 || cell == 2 ? kSimFocal : kSimOther);
  }

  const Eigen::VectorXd bx = x.leftCols(k) * as_vector(spec.beta);
  const double mean_bx = bx.mean();
  const double sd_bx = std::sqrt((bx.array() - mean_bx).square().mean());
  Eigen::MatrixXd y(n, periods);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int t = 0; t < periods; ++t) y(i, t) = spec.beta0 + bx(i) + spec.sigma_u * rng.normal();
    if (spec.effect && treated[static_cast<std::size_t>(i)]) {
      const double r = bx(i) + spec.gamma * sd_bx * rng.normal();
      const int g = cohorts[static_cast<std::size_t>(i)].period();
      for (int t = g; t <= periods; ++t) y(i, t - 1) += r;
    }
  }

  std::vector<std::string> names = spec.covariates;
  names.emplace_back(kMisspecifiedName);
  std::vector<int> times(static_cast<std::size_t>(periods));
  for (int t = 0; t < periods; ++t) times[static_cast<std::size_t>(t)] = t + 1;

  std::optional<RepeatedCrossSection> repeated;
  if (spec.repeated_cross_section) {
    std::vector<int> obs_time(static_cast<std::size_t>(n));
    Eigen::VectorXd obs_y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int t = static_cast<int>(rng.uniform_int(1, periods));
      obs_time[static_cast<std::size_t>(i)] = t;
      obs_y(i) = y(i, t - 1);
    }
    repeated.emplace(std::move(obs_time), std::move(obs_y), cohorts, subgroups, names, x);
  }
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = std::to_string(i + 1);
  return Trial{PanelDataset(std::move(ids), std::move(cohorts), std::move(subgroups), std::move(names), std::move(x),
                            std::move(times), std::move(y)),
               std::move(repeated), dgp_truth(spec), nu};
}

std::string SuiteEntry::label() const { return std::string(to_string(estimand)) + "_" + to_string(estimator); }

SuiteEntry parse_suite_entry(const std::string& label) {
  const auto cut = label.rfind('_');
  if (cut == std::string::npos) throw UsageError("suite entry '" + label + "' is not of the form <estimand>_<estimator>");
  SuiteEntry entry{parse_estimand(label.substr(0, cut)), parse_estimator(label.substr(cut + 1))};
  if (entry.estimand != Estimand::DATT && entry.estimand != Estimand::CDATT) {
    throw UsageError("simulation suites contain datt and cdatt estimators only");
  }
  check_combination(entry.estimand, entry.estimator);
  return entry;
}

std::vector<SuiteEntry> default_suite() {
  return {{Estimand::DATT, Estimator::Unadjusted}, {Estimand::DATT, Estimator::ThreeWFE},
          {Estimand::DATT, Estimator::RA},         {Estimand::DATT, Estimator::IPW},
          {Estimand::DATT, Estimator::DR},         {Estimand::CDATT, Estimator::RA},
          {Estimand::CDATT, Estimator::IPW},       {Estimand::CDATT, Estimator::DR}};
}

McRow summarize_metrics(const std::vector<TrialResult>& results, const std::vector<double>& truths) {
  if (results.empty()) throw UsageError("no trials to summarize");
  if (results.size() != truths.size()) throw UsageError("estimates and truths are not aligned");
  McRow row;
  std::vector<double> bias;
  double sum_est = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.ok) {
      ++row.failures;
      continue;
    }
    const double b = r.estimate - truths[i];
    bias.push_back(b);
    sum_est += r.estimate;
    row.avg_bias += b;
    row.rmse += b * b;
    row.mean_se += r.se;
    row.coverage += (r.lower <= truths[i] && truths[i] <= r.upper) ? 1.0 : 0.0;
    row.ci_length += r.upper - r.lower;
  }
  row.trials = bias.size();
  if (bias.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.avg_bias = row.median_bias = row.rmse = row.mean_se = row.coverage = row.ci_length = row.empirical_sd = nan;
    return row;
  }
  const double m = static_cast<double>(bias.size());
  row.avg_bias /= m;
  row.rmse = std::sqrt(row.rmse / m);
  row.mean_se /= m;
  row.coverage /= m;
  row.ci_length /= m;
  std::vector<double> sorted = bias;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = sorted.size() / 2;
  row.median_bias = sorted.size() % 2 ? sorted[half] : 0.5 * (sorted[half - 1] + sorted[half]);
  const double mean_est = sum_est / m;
  double ss = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].ok) ss += (results[i].estimate - mean_est) * (results[i].estimate - mean_est);
  }
  row.empirical_sd = bias.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
  return row;
}

const McRow& McReport::row(const std::string& estimator, int g, int t) const {
  for (const auto& r : rows) {
    if (r.estimator != estimator) continue;
    if (g < 0 ? r.aggregate : (!r.aggregate && (g == 0 || (r.g == g && r.t == t)))) return r;
  }
  throw UsageError("no report row for estimator '" + estimator + "'");
}

namespace {

std::string num(double v) { return std::isfinite(v) ? csv::format_double(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")); }

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string McReport::to_csv() const {
  std::ostringstream out;
  out << "estimator,g,t,truth,trials,failures,avg_bias,median_bias,rmse,mean_se,coverage,ci_length,empirical_sd\n";
  for (const auto& r : rows) {
    out << r.estimator << ',' << (r.aggregate ? "agg" : std::to_string(r.g)) << ','
        << (r.aggregate ? "agg" : std::to_string(r.t)) << ',' << num(r.truth) << ',' << r.trials << ',' << r.failures
        << ',' << num(r.avg_bias) << ',' << num(r.median_bias) << ',' << num(r.rmse) << ',' << num(r.mean_se) << ','
        << num(r.coverage) << ',' << num(r.ci_length) << ',' << num(r.empirical_sd) << '\n';
  }
  return out.str();
}

std::string McReport::to_json() const {
  json j;
  j["dgp"] = json::parse(dgp_to_json(spec));
  json s;
  std::vector<std::string> suite;
  for (const auto& e : settings.suite) suite.push_back(e.label());
  s["suite"] = suite;
  s["trials"] = settings.trials;
  s["master_seed"] = settings.master_seed;
  s["level"] = settings.level;
  s["trim_threshold"] = settings.trim_threshold;
  s["trim_drop"] = settings.trim_drop;
  s["comparison"] = settings.comparison ? json(to_string(*settings.comparison)) : json(nullptr);
  json agg = json::array();
  for (const auto& [pair, w] : settings.aggregate) agg.push_back({{"g", pair.first}, {"t", pair.second}, {"weight", w}});
  s["aggregate"] = agg;
  j["settings"] = s;
  j["truth"] = {{"cdatt", truth.cdatt}, {"datt", truth.datt}};
  json rs = json::array();
  for (const auto& r : rows) {
    json row = {{"estimator", r.estimator},
                {"truth", jnum(r.truth)},
                {"trials", r.trials},
                {"failures", r.failures},
                {"avg_bias", jnum(r.avg_bias)},
                {"median_bias", jnum(r.median_bias)},
                {"rmse", jnum(r.rmse)},
                {"mean_se", jnum(r.mean_se)},
                {"coverage", jnum(r.coverage)},
                {"ci_length", jnum(r.ci_length)},
                {"empirical_sd", jnum(r.empirical_sd)}};
    if (r.aggregate) {
      row["aggregate"] = true;
    } else {
      row["g"] = r.g;
      row["t"] = r.t;
    }
    rs.push_back(row);
  }
  j["rows"] = rs;
  j["failure_rate_exceeded"] = failure_rate_exceeded;
  return j.dump(2) + "\n";
}

std::string McReport::trials_csv() const {
  std::ostringstream out;
  out << "trial,estimator,g,t,truth,status,estimate,se,ci_lo,ci_hi\n";
  for (std::size_t r = 0; r < trials.size() && r < rows.size(); ++r) {
    const auto& row = rows[r];
    for (std::size_t i = 0; i < trials[r].size(); ++i) {
      const auto& tr = trials[r][i];
      out << i << ',' << row.estimator << ',' << (row.aggregate ? "agg" : std::to_string(row.g)) << ','
          << (row.aggregate ? "agg" : std::to_string(row.t)) << ',' << num(row.truth) << ','
          << (tr.ok ? "ok" : "failed") << ',' << (tr.ok ? num(tr.estimate) : "") << ',' << (tr.ok ? num(tr.se) : "")
          << ',' << (tr.ok ? num(tr.lower) : "") << ',' << (tr.ok ? num(tr.upper) : "") << '\n';
    }
  }
  return out.str();
}

McReport run_monte_carlo(const DgpSpec& spec, const McSettings& settings) {
  spec.validate();
  if (settings.trials < 1) throw UsageError("at least one trial is required");
  if (settings.suite.empty()) throw UsageError("the estimator suite is empty");
  for (const auto& e : settings.suite) {
    if (spec.repeated_cross_section) check_combination(e.estimand, e.estimator, true);
  }
  const auto pairs = spec.pairs();
  if (!settings.aggregate.empty()) {
    double total = 0.0;
    for (const auto& [pair, w] : settings.aggregate) {
      if (std::find(pairs.begin(), pairs.end(), pair) == pairs.end()) {
        throw UsageError("aggregation weight for a (g, t) pair the design does not contain");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-10) throw UsageError("aggregation weights must sum to 1");
  }

  McReport report;
  report.spec = spec;
  report.settings = settings;
  report.truth = dgp_truth(spec);

  struct RowKey {
    std::size_t entry;
    int pair;  // -1: aggregate
  };
  std::vector<RowKey> keys;
  for (std::size_t e = 0; e < settings.suite.size(); ++e) {
    for (std::size_t p = 0; p < pairs.size(); ++p) keys.push_back({e, static_cast<int>(p)});
    if (!settings.aggregate.empty() && settings.suite[e].estimator != Estimator::ThreeWFE) keys.push_back({e, -1});
  }
  std::vector<std::vector<std::size_t>> row_of(settings.suite.size(), std::vector<std::size_t>(pairs.size()));
  for (std::size_t r = 0; r < keys.size(); ++r) {
    if (keys[r].pair >= 0) row_of[keys[r].entry][static_cast<std::size_t>(keys[r].pair)] = r;
  }
  std::vector<std::vector<TrialResult>> results(keys.size(), std::vector<TrialResult>(settings.trials));

  auto design_for = [&](const SuiteEntry& entry) {
    DesignSpec d;
    d.estimand = entry.estimand;
    d.estimator = entry.estimator;
    d.comparison = settings.comparison;
    d.focal = kSimFocal;
    d.other = kSimOther;
    d.covariates = spec.covariates;
    if (spec.ps_wrong) d.ps_covariates = std::vector<std::string>{kMisspecifiedName};
    if (spec.or_wrong) d.or_covariates = std::vector<std::string>{kMisspecifiedName};
    d.trim_threshold = settings.trim_threshold;
    d.trim_drop = settings.trim_drop;
    d.level = settings.level;
    return d;
  };

  auto run_trial = [&](std::size_t trial) {
    const Trial data = generate_trial(spec, stream_key(settings.master_seed, trial));
    for (std::size_t e = 0; e < settings.suite.size(); ++e) {
      const auto design = design_for(settings.suite[e]);
      std::vector<EffectEstimate> per_pair(pairs.size());
      std::vector<bool> ok(pairs.size(), false);
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        auto& slot = results[row_of[e][p]][trial];
        try {
          auto est = data.repeated ? estimate_effects(*data.repeated, pairs[p].first, pairs[p].second, design)
                                   : estimate_effects(data.panel, pairs[p].first, pairs[p].second, design);
          per_pair[p] = std::move(est.front());
          ok[p] = true;
          slot = {true, per_pair[p].estimate, per_pair[p].se, per_pair[p].ci_lower, per_pair[p].ci_upper, {}};
        } catch (const std::exception& ex) {
          slot.ok = false;
          slot.error = ex.what();
        }
      }
      for (std::size_t r = 0; r < keys.size(); ++r) {
        if (keys[r].entry != e || keys[r].pair != -1) continue;
        auto& slot = results[r][trial];
        try {
          std::vector<AggregateComponent> components;
          for (const auto& [pair, w] : settings.aggregate) {
            const auto p = static_cast<std::size_t>(std::find(pairs.begin(), pairs.end(), pair) - pairs.begin());
            if (!ok[p]) throw NumericalError("component estimate failed");
            components.push_back({&per_pair[p], w});
          }
          const auto agg = aggregate_group_time(components);
          slot = {true, agg.estimate, agg.se, agg.ci_lower, agg.ci_upper, {}};
        } catch (const std::exception& ex) {
          slot.ok = false;
          slot.error = ex.what();
        }
      }
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < settings.trials; i = next++) run_trial(i);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(settings.threads, static_cast<unsigned>(settings.trials)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t r = 0; r < keys.size(); ++r) {
    const auto& entry = settings.suite[keys[r].entry];
    const double truth = entry.estimand == Estimand::DATT ? report.truth.datt : report.truth.cdatt;
    McRow row = summarize_metrics(results[r], std::vector<double>(settings.trials, truth));
    row.estimator = entry.label();
    row.truth = truth;
    if (keys[r].pair < 0) {
      row.aggregate = true;
    } else {
      row.g = pairs[static_cast<std::size_t>(keys[r].pair)].first;
      row.t = pairs[static_cast<std::size_t>(keys[r].pair)].second;
    }
    if (static_cast<double>(row.failures) > 0.01 * static_cast<double>(settings.trials)) {
      report.failure_rate_exceeded = true;
    }
    report.rows.push_back(std::move(row));
  }
  if (settings.keep_trials) report.trials = std::move(results);
  return report;
}

}  // namespace tripdiff
