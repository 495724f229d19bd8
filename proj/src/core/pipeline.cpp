#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <thread>
#include <tuple>

#include "cdatt.hpp"
#include "datt.hpp"
#include "error.hpp"

namespace tripdiff {

std::string valid_combinations() {
  return "valid estimand/estimator combinations:\n"
         "  datt            unadjusted, 3wfe, ra, ipw, dr\n"
         "  cdatt           ra, ipw, dr\n"
         "  att_unaffected  unadjusted, 3wfe, ra, ipw, dr\n"
         "  bound           unadjusted, 3wfe, ra, ipw, dr\n"
         "  both            ra, ipw, dr\n"
         "  repeated cross-section data: cdatt with dr";
}

void check_combination(Estimand estimand, Estimator estimator, bool repeated_cross_section) {
  bool ok = true;
  if (repeated_cross_section) {
    ok = estimand == Estimand::CDATT && estimator == Estimator::DR;
  } else if (estimand == Estimand::CDATT) {
    ok = estimator == Estimator::RA || estimator == Estimator::IPW || estimator == Estimator::DR;
  }
  if (!ok) {
    throw UsageError(std::string("estimator '") + to_string(estimator) + "' does not identify estimand '" +
                     to_string(estimand) + "'" + (repeated_cross_section ? " on repeated cross-sections" : "") +
                     "\n" + valid_combinations());
  }
}

std::pair<double, double> subgroup_shares(const std::vector<std::string>& subgroups, const std::string& focal,
                                          const std::string& other) {
  double nf = 0.0;
  double no = 0.0;
  for (const auto& s : subgroups) {
    if (s == focal) nf += 1.0;
    if (s == other) no += 1.0;
  }
  if (nf + no == 0.0) throw DegenerateDesignError("neither subgroup occurs in the data");
  return {nf / (nf + no), no / (nf + no)};
}

std::vector<EffectEstimate> estimate_effects(const PanelDataset& data, int g, int t, const DesignSpec& spec) {
  spec.validate();
  check_combination(spec.estimand, spec.estimator);
  switch (spec.estimand) {
    case Estimand::CDATT:
      return {estimate_cdatt(data, g, t, spec, spec.estimator)};
    case Estimand::DATT:
      return {estimate_datt(data, g, t, spec)};
    case Estimand::Bound:
      return {mts_lower_bound(estimate_datt(data, g, t, spec))};
    case Estimand::ATTUnaffected: {
      const auto [sf, so] = subgroup_shares(data.subgroups(), spec.focal, spec.other);
      auto [att_s, att_pop] = recover_att_unaffected(estimate_datt(data, g, t, spec), sf, so);
      return {std::move(att_s), std::move(att_pop)};
    }
  }
  throw UsageError("unknown estimand");
}

std::vector<EffectEstimate> estimate_effects(const RepeatedCrossSection& data, int g, int t, const DesignSpec& spec) {
  spec.validate();
  check_combination(spec.estimand, spec.estimator, true);
  return {estimate_cdatt_rc(data, g, t, spec)};
}

namespace {

template <typename Data>
std::vector<std::pair<int, int>> enumerate_pairs(const Data& data, const std::vector<int>& times) {
  std::vector<std::pair<int, int>> out;
  for (int g : data.treated_cohorts()) {
    if (std::find(times.begin(), times.end(), g - 1) == times.end()) continue;
    for (int t : times) {
      if (t >= g) out.emplace_back(g, t);
    }
  }
  return out;
}

template <typename Data>
EstimationResult run(const Data& data, const std::vector<int>& times, const EstimationRequest& request,
                     bool repeated) {
  request.spec.validate();
  std::vector<DesignSpec> specs;
  if (request.both) {
    if (repeated) throw UsageError("--estimand both is not available for repeated cross-sections");
    DesignSpec datt = request.spec;
    datt.estimand = Estimand::DATT;
    DesignSpec cdatt = request.spec;
    cdatt.estimand = Estimand::CDATT;
    check_combination(Estimand::CDATT, request.spec.estimator);
    specs = {datt, cdatt};
  } else {
    check_combination(request.spec.estimand, request.spec.estimator, repeated);
    specs = {request.spec};
  }
  const bool automatic = request.pairs.empty();
  const auto pairs = automatic ? enumerate_pairs(data, times) : request.pairs;
  if (pairs.empty()) throw DegenerateDesignError("no estimable (g, t) pair: no treated cohort has g-1 observed");

  struct Job {
    std::pair<int, int> pair;
    const DesignSpec* spec;
    std::vector<EffectEstimate> out;
    std::exception_ptr error;
  };
  std::vector<Job> jobs;
  for (const auto& pair : pairs) {
    for (const auto& s : specs) jobs.push_back({pair, &s, {}, nullptr});
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        jobs[j].out = estimate_effects(data, jobs[j].pair.first, jobs[j].pair.second, *jobs[j].spec);
      } catch (...) {
        jobs[j].error = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(request.threads, static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EstimationResult result;
  for (auto& job : jobs) {
    if (job.error) {
      // Automatic enumeration may reach pairs without a comparison group;
      // those are reported, explicitly requested pairs fail loudly.
      if (automatic) {
        try {
          std::rethrow_exception(job.error);
        } catch (const DegenerateDesignError& e) {
          if (dynamic_cast<const TrimError*>(&e) != nullptr) throw;
          result.skipped.push_back("(g=" + std::to_string(job.pair.first) + ", t=" + std::to_string(job.pair.second) +
                                   "): " + e.what());
          continue;
        }
      }
      std::rethrow_exception(job.error);
    }
    for (auto& e : job.out) result.estimates.push_back(std::move(e));
  }

  if (!request.aggregate.empty()) {
    // One aggregate per (estimand, estimator, scope) group.
    std::map<std::tuple<int, int, std::string>, std::vector<AggregateComponent>> groups;
    for (const auto& w : request.aggregate) {
      bool found = false;
      for (const auto& e : result.estimates) {
        if (e.g == w.g && e.t == w.t) {
          groups[{static_cast<int>(e.estimand), static_cast<int>(e.estimator), e.scope}].push_back({&e, w.weight});
          found = true;
        }
      }
      if (!found) {
        throw UsageError("aggregation weight given for (g=" + std::to_string(w.g) + ", t=" + std::to_string(w.t) +
                         ") but that pair was not estimated");
      }
    }
    for (auto& [key, components] : groups) {
      if (components.front().effect->one_sided || std::get<0>(key) == static_cast<int>(Estimand::ATTUnaffected)) {
        continue;  // bounds and recovered ATTs are interpretation layers, not aggregable estimands
      }
      result.aggregates.push_back(aggregate_group_time(components));
    }
  }
  return result;
}

}  // namespace

EstimationResult run_estimation(const PanelDataset& data, const EstimationRequest& request) {
  return run(data, data.times(), request, false);
}

EstimationResult run_estimation(const RepeatedCrossSection& data, const EstimationRequest& request) {
  return run(data, data.periods(), request, true);
}

}  // namespace tripdiff
