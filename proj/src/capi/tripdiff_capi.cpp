#include "tripdiff/tripdiff.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>
#include <variant>

#include "json.hpp"

#include "dataset.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "simlab.hpp"

struct td_dataset {
  std::variant<tripdiff::PanelDataset, tripdiff::RepeatedCrossSection> data;
};

struct td_result {
  tripdiff::EstimationResult result;
  std::vector<std::string> labels;  // backing storage for td_estimate_view::estimand
};

struct td_mc_report {
  tripdiff::McReport report;
};

namespace {

thread_local std::string last_error;

td_status fail(td_status status, const char* what) {
  last_error = what;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
td_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return TD_OK;
  } catch (const tripdiff::Error& e) {
    return fail(static_cast<td_status>(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TD_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw tripdiff::UsageError(std::string(name) + " must not be null");
}

tripdiff::DgpSpec dgp_or_default(const char* dgp_json) {
  if (dgp_json == nullptr || *dgp_json == '\0') return tripdiff::default_dgp();
  return tripdiff::dgp_from_json(dgp_json);
}

}  // namespace

extern "C" {

const char* td_version(void) { return "1.0.0"; }

const char* td_last_error(void) { return last_error.c_str(); }

void td_string_free(char* s) { std::free(s); }

td_status td_dataset_load(const char* path, td_sampling sampling, td_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    if (sampling == TD_PANEL) {
      *out = new td_dataset{tripdiff::load_panel(path)};
    } else if (sampling == TD_REPEATED_CROSS_SECTION) {
      *out = new td_dataset{tripdiff::load_repeated_cross_section(path)};
    } else {
      throw tripdiff::UsageError("unknown sampling design");
    }
  });
}

void td_dataset_free(td_dataset* ds) { delete ds; }

td_sampling td_dataset_sampling(const td_dataset* ds) {
  return ds != nullptr && std::holds_alternative<tripdiff::RepeatedCrossSection>(ds->data) ? TD_REPEATED_CROSS_SECTION
                                                                                           : TD_PANEL;
}

td_status td_dataset_info_json(const td_dataset* ds, char** out_json) {
  return guarded([&] {
    require(ds, "dataset");
    require(out_json, "out_json");
    nlohmann::json j;
    std::visit(
        [&](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, tripdiff::PanelDataset>) {
            j["sampling"] = "panel";
            j["units"] = d.size();
            j["periods"] = d.times();
          } else {
            j["sampling"] = "repeated_cross_section";
            j["observations"] = d.size();
            j["periods"] = d.periods();
          }
          j["subgroups"] = d.subgroup_labels();
          j["covariates"] = d.covariate_names();
          j["treated_cohorts"] = d.treated_cohorts();
          j["has_never_treated"] = d.has_never_treated();
        },
        ds->data);
    *out_json = copy_string(j.dump(2));
  });
}

td_status td_dataset_write(const td_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "dataset");
    require(path, "path");
    std::visit(
        [&](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, tripdiff::PanelDataset>) {
            tripdiff::write_panel(d, path);
          } else {
            tripdiff::write_repeated_cross_section(d, path);
          }
        },
        ds->data);
  });
}

td_status td_validate(const td_dataset* ds, const char* request_json, char** out_json, char** out_text,
                      int* passed) {
  return guarded([&] {
    require(ds, "dataset");
    require(request_json, "request_json");
    const auto* panel = std::get_if<tripdiff::PanelDataset>(&ds->data);
    if (panel == nullptr) throw tripdiff::UsageError("design validation needs panel data");
    const auto request = tripdiff::request_from_json(request_json);
    const auto report = tripdiff::validate_design(*panel, request.spec);
    if (out_json != nullptr) *out_json = copy_string(report.to_json());
    if (out_text != nullptr) *out_text = copy_string(report.to_text());
    if (passed != nullptr) *passed = report.passed() ? 1 : 0;
  });
}

td_status td_estimate(const td_dataset* ds, const char* request_json, td_result** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(request_json, "request_json");
    require(out, "out");
    *out = nullptr;
    const auto request = tripdiff::request_from_json(request_json);
    auto result = std::visit([&](const auto& d) { return tripdiff::run_estimation(d, request); }, ds->data);
    auto* r = new td_result{std::move(result), {}};
    for (const auto& e : r->result.estimates) r->labels.push_back(tripdiff::estimand_label(e));
    *out = r;
  });
}

void td_result_free(td_result* r) { delete r; }

size_t td_result_count(const td_result* r) { return r == nullptr ? 0 : r->result.estimates.size(); }

td_status td_result_get(const td_result* r, size_t index, td_estimate_view* out) {
  return guarded([&] {
    require(r, "result");
    require(out, "out");
    if (index >= r->result.estimates.size()) throw tripdiff::UsageError("estimate index out of range");
    const auto& e = r->result.estimates[index];
    *out = {r->labels[index].c_str(),
            tripdiff::to_string(e.estimator),
            tripdiff::to_string(e.comparison),
            e.g,
            e.t,
            e.estimate,
            e.se,
            e.ci_lower,
            e.ci_upper,
            e.level,
            e.n};
  });
}

td_status td_result_to_json(const td_result* r, char** out_json) {
  return guarded([&] {
    require(r, "result");
    require(out_json, "out_json");
    *out_json = copy_string(tripdiff::result_to_json(r->result));
  });
}

td_status td_result_to_csv(const td_result* r, char** out_csv) {
  return guarded([&] {
    require(r, "result");
    require(out_csv, "out_csv");
    *out_csv = copy_string(tripdiff::result_to_csv(r->result));
  });
}

td_status td_request_normalize(const char* request_json, char** out_json) {
  return guarded([&] {
    require(request_json, "request_json");
    require(out_json, "out_json");
    *out_json = copy_string(tripdiff::request_to_json(tripdiff::request_from_json(request_json)));
  });
}

td_status td_valid_combinations(char** out_text) {
  return guarded([&] {
    require(out_text, "out_text");
    *out_text = copy_string(tripdiff::valid_combinations());
  });
}

td_status td_default_dgp_json(char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = copy_string(tripdiff::dgp_to_json(tripdiff::default_dgp()));
  });
}

td_status td_dgp_normalize(const char* dgp_json, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = copy_string(tripdiff::dgp_to_json(dgp_or_default(dgp_json)));
  });
}

td_status td_generate_trial(const char* dgp_json, uint64_t master_seed, uint64_t trial, td_dataset** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto data = tripdiff::generate_trial(dgp_or_default(dgp_json), tripdiff::stream_key(master_seed, trial));
    if (data.repeated) {
      *out = new td_dataset{std::move(*data.repeated)};
    } else {
      *out = new td_dataset{std::move(data.panel)};
    }
  });
}

td_status td_simulate(const char* dgp_json, const char* settings_json, td_mc_report** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const auto spec = dgp_or_default(dgp_json);
    const auto settings = settings_json == nullptr || *settings_json == '\0'
                              ? tripdiff::McSettings{}
                              : tripdiff::mc_settings_from_json(settings_json);
    *out = new td_mc_report{tripdiff::run_monte_carlo(spec, settings)};
  });
}

void td_mc_report_free(td_mc_report* r) { delete r; }

td_status td_mc_report_to_csv(const td_mc_report* r, char** out_csv) {
  return guarded([&] {
    require(r, "report");
    require(out_csv, "out_csv");
    *out_csv = copy_string(r->report.to_csv());
  });
}

td_status td_mc_report_to_json(const td_mc_report* r, char** out_json) {
  return guarded([&] {
    require(r, "report");
    require(out_json, "out_json");
    *out_json = copy_string(r->report.to_json());
  });
}

td_status td_mc_report_trials_csv(const td_mc_report* r, char** out_csv) {
  return guarded([&] {
    require(r, "report");
    require(out_csv, "out_csv");
    *out_csv = copy_string(r->report.trials_csv());
  });
}

int td_mc_report_failed(const td_mc_report* r) { return r != nullptr && r->report.failure_rate_exceeded ? 1 : 0; }

}  // extern "C"
