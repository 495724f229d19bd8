#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tripdiff_cli {

namespace {

const std::vector<KeySpec> kEstimate = {
    {"data", Kind::String},       {"sampling", Kind::String},   {"estimand", Kind::String},
    {"estimator", Kind::String},  {"comparison", Kind::String}, {"g", Kind::Int},
    {"t", Kind::Int},             {"s", Kind::String},          {"sprime", Kind::String},
    {"covariates", Kind::List},   {"ps_covariates", Kind::List}, {"or_covariates", Kind::List},
    {"trim", Kind::Flag},         {"epsilon", Kind::Real},      {"level", Kind::Real},
    {"aggregate", Kind::Aggregate}, {"out", Kind::String},      {"formats", Kind::List},
    {"threads", Kind::UInt},
};

const std::vector<KeySpec> kSimulate = {
    {"dgp", Kind::Dgp},         {"trials", Kind::UInt},       {"seed", Kind::UInt},
    {"suite", Kind::List},      {"comparison", Kind::String}, {"trim", Kind::Flag},
    {"epsilon", Kind::Real},    {"level", Kind::Real},        {"aggregate", Kind::Aggregate},
    {"keep_trials", Kind::Flag}, {"emit_data", Kind::UInt},   {"out", Kind::String},
    {"formats", Kind::List},    {"threads", Kind::UInt},
};

const std::vector<KeySpec> kValidate = {
    {"data", Kind::String},    {"comparison", Kind::String}, {"s", Kind::String},
    {"sprime", Kind::String},  {"epsilon", Kind::Real},      {"out", Kind::String},
    {"formats", Kind::List},
};

json defaults_for(const std::string& command) {
  json d = {{"formats", {"csv", "json"}}};
  if (command == "estimate") {
    d.update({{"sampling", "panel"}, {"estimand", "cdatt"}, {"estimator", "dr"}, {"comparison", nullptr},
              {"trim", false}, {"epsilon", 0.005}, {"level", 0.95}, {"aggregate", json::array()},
              {"ps_covariates", nullptr}, {"or_covariates", nullptr}, {"threads", 1}});
  } else if (command == "simulate") {
    d.update({{"trials", 1000}, {"seed", 1}, {"comparison", nullptr}, {"trim", false}, {"epsilon", 0.005},
              {"level", 0.95}, {"aggregate", json::array()}, {"keep_trials", false}, {"emit_data", 0},
              {"threads", 1}});
  } else {
    d.update({{"comparison", nullptr}, {"epsilon", 0.005}});
  }
  return d;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw UsageFailure("--" + key + ": '" + text + "' is not a valid number");
  return value;
}

// Type check of a value coming from a config file.
void check_type(const std::string& key, Kind kind, const json& v) {
  bool ok = true;
  switch (kind) {
    case Kind::String: ok = v.is_string() || v.is_null(); break;
    case Kind::Int: ok = v.is_number_integer(); break;
    case Kind::UInt: ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); break;
    case Kind::Real: ok = v.is_number(); break;
    case Kind::List:
      ok = v.is_null() || (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); }));
      break;
    case Kind::Flag: ok = v.is_boolean(); break;
    case Kind::Aggregate: ok = v.is_array(); break;
    case Kind::Dgp: ok = v.is_string() || v.is_object(); break;
  }
  if (!ok) throw UsageFailure("config key '" + key + "' has a value of the wrong type");
}

}  // namespace

const std::vector<KeySpec>& keys_for(const std::string& command) {
  if (command == "estimate") return kEstimate;
  if (command == "simulate") return kSimulate;
  return kValidate;
}

json parse_flag(const std::string& key, Kind kind, const std::string& text) {
  switch (kind) {
    case Kind::String:
    case Kind::Dgp:
      return text;
    case Kind::Int:
      return parse_number<int>(key, text);
    case Kind::UInt:
      return parse_number<unsigned long long>(key, text);
    case Kind::Real:
      return parse_number<double>(key, text);
    case Kind::List:
      return split(text, ',');
    case Kind::Flag:
      return true;
    case Kind::Aggregate: {
      // g:t=weight,g:t=weight,...
      json out = json::array();
      for (const auto& item : split(text, ',')) {
        const auto colon = item.find(':');
        const auto eq = item.find('=');
        if (colon == std::string::npos || eq == std::string::npos || eq < colon) {
          throw UsageFailure("--aggregate expects g:t=weight entries, got '" + item + "'");
        }
        out.push_back({{"g", parse_number<int>(key, item.substr(0, colon))},
                       {"t", parse_number<int>(key, item.substr(colon + 1, eq - colon - 1))},
                       {"weight", parse_number<double>(key, item.substr(eq + 1))}});
      }
      return out;
    }
  }
  return nullptr;
}

json resolve(const std::string& command, const std::optional<std::string>& config_path, const json& flags) {
  json config = defaults_for(command);
  const auto& keys = keys_for(command);
  auto known = [&](const std::string& key) -> const KeySpec* {
    for (const auto& k : keys) {
      if (key == k.key) return &k;
    }
    return nullptr;
  };
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw UsageFailure("cannot open config file " + *config_path);
    json file;
    try {
      in >> file;
    } catch (const json::exception& e) {
      throw UsageFailure("config file " + *config_path + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw UsageFailure("config file " + *config_path + " must hold a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (key == "command") {
        if (value != command) throw UsageFailure("config file is for '" + value.dump() + "', not " + command);
        continue;
      }
      const auto* spec = known(key);
      if (spec == nullptr) throw UsageFailure("unknown config key '" + key + "' for " + command);
      check_type(key, spec->kind, value);
      config[key] = value;
    }
  }
  for (const auto& [key, value] : flags.items()) config[key] = value;
  config["command"] = command;
  return config;
}

std::string output_dir(const json& config) {
  if (config.contains("out") && config["out"].is_string()) return config["out"].get<std::string>();
  if (const char* env = std::getenv("TRIPDIFF_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

json provenance(const json& config) {
  json out = config;
  out.erase("out");
  out.erase("threads");
  out.erase("formats");
  return out;
}

}  // namespace tripdiff_cli
