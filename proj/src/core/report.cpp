#include "report.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "csv.hpp"
#include "error.hpp"

namespace tripdiff {

using nlohmann::json;

namespace {

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError(std::string(what) + " must be a JSON object");
  return j;
}

// JSON has no infinities; one-sided bounds write null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string num(double v) {
  if (std::isfinite(v)) return csv::format_double(v);
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

json influence_json(const InfluenceVector& iv) {
  json values = json::array();
  for (Eigen::Index i = 0; i < iv.values.size(); ++i) values.push_back(iv.values(i));
  return {{"population", iv.population},
          {"observation_level", iv.observation_level},
          {"rows", iv.rows},
          {"values", values}};
}

json effect_json(const EffectEstimate& e) {
  const auto& d = e.diagnostics;
  json j = {{"estimand", to_string(e.estimand)},
            {"estimator", to_string(e.estimator)},
            {"comparison", to_string(e.comparison)},
            {"g", e.g},
            {"t", e.t},
            {"s", e.focal},
            {"sprime", e.other},
            {"sampling", e.repeated_cross_section ? "repeated_cross_section" : "panel"},
            {"estimate", e.estimate},
            {"se", e.se},
            {"level", e.level},
            {"ci_lo", jnum(e.ci_lower)},
            {"ci_hi", jnum(e.ci_upper)},
            {"one_sided", e.one_sided},
            {"n", e.n}};
  if (!e.scope.empty()) j["scope"] = e.scope;
  json counts = json::object();
  constexpr const char* kCellKeys[kCellCount] = {"treated_s", "treated_sprime", "comparison_s", "comparison_sprime"};
  for (std::size_t c = 0; c < kCellCount; ++c) counts[kCellKeys[c]] = e.cell_counts[c];
  j["cell_counts"] = counts;
  j["diagnostics"] = {{"models_converged", d.models_converged},
                      {"logit_iterations", d.logit_iterations},
                      {"logit_gradient_norm", d.logit_gradient_norm},
                      {"trimmed", d.trimmed},
                      {"max_weight", d.max_weight},
                      {"degenerate_ci", d.degenerate_ci},
                      {"warnings", d.warnings},
                      {"notes", d.notes}};
  j["influence"] = influence_json(e.influence);
  return j;
}

json aggregate_json(const AggregatedEffect& a) {
  json comps = json::array();
  for (std::size_t k = 0; k < a.components.size(); ++k) {
    comps.push_back({{"g", a.components[k].first}, {"t", a.components[k].second}, {"weight", a.weights[k]}});
  }
  return {{"estimand", to_string(a.estimand)},
          {"estimator", to_string(a.estimator)},
          {"comparison", to_string(a.comparison)},
          {"components", comps},
          {"estimate", a.estimate},
          {"se", a.se},
          {"level", a.level},
          {"ci_lo", jnum(a.ci_lower)},
          {"ci_hi", jnum(a.ci_upper)},
          {"influence", influence_json(a.influence)}};
}

template <typename T>
T get(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + key + "' has a value of the wrong type");
  }
}

}  // namespace

std::string estimand_label(const EffectEstimate& e) {
  std::string out = to_string(e.estimand);
  if (!e.scope.empty()) out += "_" + e.scope;
  return out;
}

EstimationRequest request_from_json(const std::string& text) {
  const json j = parse_object(text, "estimation request");
  EstimationRequest r;
  for (const auto& [key, v] : j.items()) {
    if (key == "estimand") {
      const auto s = get<std::string>(v, key);
      r.both = s == "both";
      if (!r.both) r.spec.estimand = parse_estimand(s);
    } else if (key == "estimator") {
      r.spec.estimator = parse_estimator(get<std::string>(v, key));
    } else if (key == "comparison") {
      if (!v.is_null()) r.spec.comparison = parse_comparison(get<std::string>(v, key));
    } else if (key == "s") {
      r.spec.focal = get<std::string>(v, key);
    } else if (key == "sprime") {
      r.spec.other = get<std::string>(v, key);
    } else if (key == "covariates") {
      r.spec.covariates = get<std::vector<std::string>>(v, key);
    } else if (key == "ps_covariates") {
      if (!v.is_null()) r.spec.ps_covariates = get<std::vector<std::string>>(v, key);
    } else if (key == "or_covariates") {
      if (!v.is_null()) r.spec.or_covariates = get<std::vector<std::string>>(v, key);
    } else if (key == "trim_threshold") {
      r.spec.trim_threshold = get<double>(v, key);
    } else if (key == "trim_drop") {
      r.spec.trim_drop = get<bool>(v, key);
    } else if (key == "level") {
      r.spec.level = get<double>(v, key);
    } else if (key == "pairs") {
      for (const auto& p : get<std::vector<std::array<int, 2>>>(v, key)) r.pairs.emplace_back(p[0], p[1]);
    } else if (key == "aggregate") {
      if (!v.is_array()) throw UsageError("config key 'aggregate' must be an array of {g, t, weight}");
      for (const auto& w : v) {
        if (!w.is_object() || w.size() != 3 || !w.contains("g") || !w.contains("t") || !w.contains("weight")) {
          throw UsageError("aggregate entries must be objects with exactly g, t and weight");
        }
        r.aggregate.push_back({get<int>(w["g"], "aggregate.g"), get<int>(w["t"], "aggregate.t"),
                               get<double>(w["weight"], "aggregate.weight")});
      }
    } else if (key == "threads") {
      r.threads = get<unsigned>(v, key);
    } else {
      throw UsageError("unknown estimation request key '" + key + "'");
    }
  }
  if (r.spec.focal.empty() || r.spec.other.empty()) throw UsageError("both subgroups s and sprime are required");
  r.spec.validate();
  check_combination(r.both ? Estimand::CDATT : r.spec.estimand, r.spec.estimator);
  return r;
}

std::string request_to_json(const EstimationRequest& r) {
  json j;
  j["estimand"] = r.both ? "both" : to_string(r.spec.estimand);
  j["estimator"] = to_string(r.spec.estimator);
  j["comparison"] = r.spec.comparison ? json(to_string(*r.spec.comparison)) : json(nullptr);
  j["s"] = r.spec.focal;
  j["sprime"] = r.spec.other;
  j["covariates"] = r.spec.covariates;
  j["ps_covariates"] = r.spec.ps_covariates ? json(*r.spec.ps_covariates) : json(nullptr);
  j["or_covariates"] = r.spec.or_covariates ? json(*r.spec.or_covariates) : json(nullptr);
  j["trim_threshold"] = r.spec.trim_threshold;
  j["trim_drop"] = r.spec.trim_drop;
  j["level"] = r.spec.level;
  json pairs = json::array();
  for (const auto& [g, t] : r.pairs) pairs.push_back({g, t});
  j["pairs"] = pairs;
  json agg = json::array();
  for (const auto& w : r.aggregate) agg.push_back({{"g", w.g}, {"t", w.t}, {"weight", w.weight}});
  j["aggregate"] = agg;
  j["threads"] = r.threads;
  return j.dump(2);
}

std::string result_to_json(const EstimationResult& result) {
  json j;
  json es = json::array();
  for (const auto& e : result.estimates) es.push_back(effect_json(e));
  json as = json::array();
  for (const auto& a : result.aggregates) as.push_back(aggregate_json(a));
  j["estimates"] = es;
  j["aggregates"] = as;
  j["skipped"] = result.skipped;
  return j.dump(2);
}

std::string result_to_csv(const EstimationResult& result) {
  std::ostringstream out;
  out << "estimand,estimator,comparison,g,t,estimate,se,ci_lo,ci_hi\n";
  for (const auto& e : result.estimates) {
    out << estimand_label(e) << ',' << to_string(e.estimator) << ',' << to_string(e.comparison) << ',' << e.g << ','
        << e.t << ',' << num(e.estimate) << ',' << num(e.se) << ',' << num(e.ci_lower) << ',' << num(e.ci_upper)
        << '\n';
  }
  for (const auto& a : result.aggregates) {
    out << to_string(a.estimand) << ',' << to_string(a.estimator) << ',' << to_string(a.comparison) << ",agg,agg,"
        << num(a.estimate) << ',' << num(a.se) << ',' << num(a.ci_lower) << ',' << num(a.ci_upper) << '\n';
  }
  return out.str();
}

McSettings mc_settings_from_json(const std::string& text) {
  const json j = parse_object(text, "simulation settings");
  McSettings s;
  for (const auto& [key, v] : j.items()) {
    if (key == "suite") {
      s.suite.clear();
      for (const auto& label : get<std::vector<std::string>>(v, key)) s.suite.push_back(parse_suite_entry(label));
    } else if (key == "trials") {
      s.trials = get<std::size_t>(v, key);
    } else if (key == "master_seed") {
      s.master_seed = get<std::uint64_t>(v, key);
    } else if (key == "threads") {
      s.threads = get<unsigned>(v, key);
    } else if (key == "level") {
      s.level = get<double>(v, key);
    } else if (key == "trim_threshold") {
      s.trim_threshold = get<double>(v, key);
    } else if (key == "trim_drop") {
      s.trim_drop = get<bool>(v, key);
    } else if (key == "comparison") {
      if (!v.is_null()) s.comparison = parse_comparison(get<std::string>(v, key));
    } else if (key == "aggregate") {
      if (!v.is_array()) throw UsageError("settings key 'aggregate' must be an array of {g, t, weight}");
      for (const auto& w : v) {
        if (!w.is_object() || w.size() != 3 || !w.contains("g") || !w.contains("t") || !w.contains("weight")) {
          throw UsageError("aggregate entries must be objects with exactly g, t and weight");
        }
        s.aggregate.push_back({{get<int>(w["g"], "aggregate.g"), get<int>(w["t"], "aggregate.t")},
                               get<double>(w["weight"], "aggregate.weight")});
      }
    } else if (key == "keep_trials") {
      s.keep_trials = get<bool>(v, key);
    } else {
      throw UsageError("unknown simulation settings key '" + key + "'");
    }
  }
  return s;
}

}  // namespace tripdiff
