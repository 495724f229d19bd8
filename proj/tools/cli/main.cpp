#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "run_config.hpp"
#include "tripdiff/tripdiff.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tripdiff_cli;

namespace {

// A failed C API call, carrying its status as the exit code.
struct ApiFailure {
  td_status status;
  std::string message;
};

void check(td_status status) {
  if (status != TD_OK) throw ApiFailure{status, td_last_error()};
}

std::string take(char* s) {
  std::string out(s == nullptr ? "" : s);
  td_string_free(s);
  return out;
}

struct DatasetDeleter {
  void operator()(td_dataset* p) const { td_dataset_free(p); }
};
struct ResultDeleter {
  void operator()(td_result* p) const { td_result_free(p); }
};
struct ReportDeleter {
  void operator()(td_mc_report* p) const { td_mc_report_free(p); }
};
using Dataset = std::unique_ptr<td_dataset, DatasetDeleter>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageFailure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ApiFailure{TD_ERR_DATA, "cannot write " + path.string()};
  out << content;
}

bool wants(const json& config, const char* format) {
  const auto& f = config["formats"];
  return f.is_array() && std::find(f.begin(), f.end(), format) != f.end();
}

const std::string& need_string(const json& config, const char* key) {
  if (!config.contains(key) || !config[key].is_string() || config[key].get_ref<const std::string&>().empty()) {
    throw UsageFailure(std::string("--") + key + " is required");
  }
  return config[key].get_ref<const std::string&>();
}

Dataset load(const json& config) {
  const auto& sampling = config.value("sampling", std::string("panel"));
  td_sampling mode;
  if (sampling == "panel") {
    mode = TD_PANEL;
  } else if (sampling == "rc" || sampling == "repeated_cross_section") {
    mode = TD_REPEATED_CROSS_SECTION;
  } else {
    throw UsageFailure("--sampling must be panel or rc");
  }
  td_dataset* ds = nullptr;
  check(td_dataset_load(need_string(config, "data").c_str(), mode, &ds));
  return Dataset(ds);
}

json dataset_info(const td_dataset* ds) {
  char* text = nullptr;
  check(td_dataset_info_json(ds, &text));
  return json::parse(take(text));
}

int run_estimate(json config) {
  json request = {{"estimand", config["estimand"]},
                  {"estimator", config["estimator"]},
                  {"comparison", config["comparison"]},
                  {"s", need_string(config, "s")},
                  {"sprime", need_string(config, "sprime")},
                  {"ps_covariates", config["ps_covariates"]},
                  {"or_covariates", config["or_covariates"]},
                  {"trim_threshold", config["epsilon"]},
                  {"trim_drop", config["trim"]},
                  {"level", config["level"]},
                  {"aggregate", config["aggregate"]},
                  {"threads", config["threads"]}};
  // Reject bad estimand/estimator pairs before touching the data.
  char* normalized = nullptr;
  check(td_request_normalize(request.dump().c_str(), &normalized));
  td_string_free(normalized);

  const auto data = load(config);
  const auto info = dataset_info(data.get());
  if (!config.contains("covariates") || config["covariates"].is_null()) config["covariates"] = info["covariates"];
  request["covariates"] = config["covariates"];

  json pairs = json::array();
  if (config.contains("t") && !config.contains("g")) throw UsageFailure("--t needs --g");
  if (config.contains("g")) {
    const int g = config["g"];
    if (config.contains("t")) {
      pairs.push_back({g, config["t"].get<int>()});
    } else {
      for (int t : info["periods"]) {
        if (t >= g) pairs.push_back({g, t});
      }
    }
  }
  request["pairs"] = pairs;

  td_result* raw = nullptr;
  check(td_estimate(data.get(), request.dump().c_str(), &raw));
  std::unique_ptr<td_result, ResultDeleter> result(raw);

  char* text = nullptr;
  check(td_result_to_csv(result.get(), &text));
  const std::string table = take(text);
  check(td_result_to_json(result.get(), &text));
  json report = json::parse(take(text));
  report["config"] = provenance(config);

  const fs::path dir = output_dir(config);
  if (wants(config, "json")) write_file(dir / "report.json", report.dump(2) + "\n");
  if (wants(config, "csv")) write_file(dir / "report.csv", table);
  std::cout << table;
  for (const auto& s : report["skipped"]) std::cerr << "skipped " << s.get<std::string>() << '\n';
  for (const auto& e : report["estimates"]) {
    for (const auto& w : e["diagnostics"]["warnings"]) {
      std::cerr << "warning (g=" << e["g"] << ", t=" << e["t"] << "): " << w.get<std::string>() << '\n';
    }
  }
  return 0;
}

int run_simulate(json config) {
  std::string dgp_text;
  if (config.contains("dgp")) {
    dgp_text = config["dgp"].is_string() ? read_file(config["dgp"]) : config["dgp"].dump();
  }
  char* text = nullptr;
  check(td_dgp_normalize(dgp_text.c_str(), &text));
  config["dgp"] = json::parse(take(text));
  dgp_text = config["dgp"].dump();

  json settings = {{"trials", config["trials"]},
                   {"master_seed", config["seed"]},
                   {"threads", config["threads"]},
                   {"level", config["level"]},
                   {"trim_threshold", config["epsilon"]},
                   {"trim_drop", config["trim"]},
                   {"comparison", config["comparison"]},
                   {"aggregate", config["aggregate"]},
                   {"keep_trials", config["keep_trials"]}};
  if (config.contains("suite") && !config["suite"].is_null()) settings["suite"] = config["suite"];

  td_mc_report* raw = nullptr;
  check(td_simulate(dgp_text.c_str(), settings.dump().c_str(), &raw));
  std::unique_ptr<td_mc_report, ReportDeleter> report(raw);

  check(td_mc_report_to_csv(report.get(), &text));
  const std::string table = take(text);
  check(td_mc_report_to_json(report.get(), &text));
  json doc = json::parse(take(text));
  if (!config.contains("suite") || config["suite"].is_null()) config["suite"] = doc["settings"]["suite"];
  doc["config"] = provenance(config);

  const fs::path dir = output_dir(config);
  if (wants(config, "json")) write_file(dir / "mc_report.json", doc.dump(2) + "\n");
  if (wants(config, "csv")) write_file(dir / "mc_report.csv", table);
  if (config["keep_trials"].get<bool>()) {
    check(td_mc_report_trials_csv(report.get(), &text));
    write_file(dir / "trials.csv", take(text));
  }
  const auto emit = config["emit_data"].get<unsigned long long>();
  for (unsigned long long k = 0; k < emit; ++k) {
    td_dataset* ds = nullptr;
    check(td_generate_trial(dgp_text.c_str(), config["seed"].get<unsigned long long>(), k, &ds));
    Dataset owned(ds);
    fs::create_directories(dir / "data");
    check(td_dataset_write(owned.get(), (dir / "data" / ("trial_" + std::to_string(k) + ".csv")).string().c_str()));
  }
  std::cout << table;
  if (td_mc_report_failed(report.get()) != 0) {
    std::cerr << "error: more than 1% of trials failed for at least one estimator (see failures column)\n";
    return TD_ERR_NUMERICAL;
  }
  return 0;
}

int run_validate(const json& config) {
  const auto data = load(config);
  const json request = {{"s", need_string(config, "s")},
                        {"sprime", need_string(config, "sprime")},
                        {"comparison", config["comparison"]},
                        {"trim_threshold", config["epsilon"]}};
  char* json_text = nullptr;
  char* plain = nullptr;
  int passed = 0;
  check(td_validate(data.get(), request.dump().c_str(), &json_text, &plain, &passed));
  json report = json::parse(take(json_text));
  report["config"] = provenance(config);
  const std::string text = take(plain);
  if (wants(config, "json")) write_file(fs::path(output_dir(config)) / "validation.json", report.dump(2) + "\n");
  std::cout << text;
  return passed != 0 ? 0 : TD_ERR_DEGENERATE;
}

// Registers one CLI flag per accepted key; flags given on the command line
// are collected as raw text for parse_flag.
struct FlagSet {
  std::map<std::string, std::string> text;
  std::map<std::string, bool> flags;
  std::string config;
  std::vector<std::pair<KeySpec, CLI::Option*>> options;
  CLI::Option* config_option = nullptr;

  void attach(CLI::App& app, const std::string& command) {
    config_option = app.add_option("--config", config, "JSON config file (flags override its values)");
    for (const auto& k : keys_for(command)) {
      std::string name = std::string("--") + k.key;
      std::replace(name.begin(), name.end(), '_', '-');
      CLI::Option* opt = k.kind == Kind::Flag ? app.add_flag(name, flags[k.key], help(k.key))
                                              : app.add_option(name, text[k.key], help(k.key));
      options.emplace_back(k, opt);
    }
  }

  json collect() const {
    json out = json::object();
    for (const auto& [k, opt] : options) {
      if (opt->count() > 0) out[k.key] = parse_flag(k.key, k.kind, k.kind == Kind::Flag ? "" : text.at(k.key));
    }
    return out;
  }

  std::optional<std::string> config_path() const {
    return config_option->count() > 0 ? std::optional<std::string>(config) : std::nullopt;
  }

  static std::string help(const std::string& key) {
    static const std::map<std::string, std::string> h = {
        {"data", "input CSV"},
        {"sampling", "panel | rc"},
        {"estimand", "datt | cdatt | att_unaffected | bound | both"},
        {"estimator", "unadjusted | 3wfe | ra | ipw | dr"},
        {"comparison", "never | notyet (default: never if available)"},
        {"g", "treated cohort"},
        {"t", "evaluation period"},
        {"s", "subgroup of interest"},
        {"sprime", "comparison subgroup"},
        {"covariates", "comma-separated covariate columns (default: all)"},
        {"ps_covariates", "propensity model covariates"},
        {"or_covariates", "outcome model covariates"},
        {"trim", "drop rows violating overlap instead of failing"},
        {"epsilon", "overlap threshold"},
        {"level", "confidence level"},
        {"aggregate", "weights g:t=w,... over (g, t) pairs"},
        {"out", "output directory (default: $TRIPDIFF_OUTPUT_DIR or .)"},
        {"formats", "csv,json"},
        {"threads", "worker threads"},
        {"dgp", "DGP spec JSON file (default: built-in)"},
        {"trials", "Monte Carlo trials"},
        {"seed", "master seed"},
        {"suite", "estimators, e.g. cdatt_dr,datt_ipw"},
        {"keep_trials", "write per-trial estimates to trials.csv"},
        {"emit_data", "write the first N generated datasets to data/"},
    };
    auto it = h.find(key);
    return it == h.end() ? "" : it->second;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tripdiff: triple-difference estimation and simulation"};
  app.require_subcommand(1);
  const std::vector<std::string> commands = {"estimate", "simulate", "validate"};
  std::map<std::string, FlagSet> sets;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> about = {
      {"estimate", "estimate DATT / CDATT effects from a CSV"},
      {"simulate", "run a Monte Carlo study"},
      {"validate", "check cells and overlap of a design"},
  };
  for (const auto& c : commands) {
    subs[c] = app.add_subcommand(c, about.at(c));
    sets[c].attach(*subs[c], c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return TD_ERR_USAGE;
  }

  try {
    for (const auto& c : commands) {
      if (!subs[c]->parsed()) continue;
      const json config = resolve(c, sets[c].config_path(), sets[c].collect());
      if (c == "estimate") return run_estimate(config);
      if (c == "simulate") return run_simulate(config);
      return run_validate(config);
    }
  } catch (const UsageFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return TD_ERR_USAGE;
  } catch (const ApiFailure& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.status;
  } catch (const json::exception& e) {
    std::cerr << "error: bad configuration value: " << e.what() << '\n';
    return TD_ERR_USAGE;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return TD_ERR_INTERNAL;
  }
  return TD_ERR_USAGE;
}
