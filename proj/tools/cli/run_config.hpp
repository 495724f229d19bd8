#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace tripdiff_cli {

using nlohmann::json;

class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { String, Int, UInt, Real, List, Flag, Aggregate, Dgp };

struct KeySpec {
  const char* key;
  Kind kind;
};

// Keys accepted by each subcommand, in config files and as flags.
const std::vector<KeySpec>& keys_for(const std::string& command);

// Converts a flag's raw text to the JSON value stored under its key.
json parse_flag(const std::string& key, Kind kind, const std::string& text);

// Defaults <- config file <- flags. Rejects unknown keys and a `command`
// entry naming another subcommand.
json resolve(const std::string& command, const std::optional<std::string>& config_path, const json& flags);

// Output directory: flag/config value, else $TRIPDIFF_OUTPUT_DIR, else ".".
std::string output_dir(const json& config);

// Keys echoed into reports: everything except plumbing that cannot change
// the numbers (output location, thread count, formats).
json provenance(const json& config);

}  // namespace tripdiff_cli
