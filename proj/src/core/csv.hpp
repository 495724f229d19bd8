#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tripdiff::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;

  // Index of `name` in the header, if present.
  std::optional<std::size_t> column(std::string_view name) const;
};

// Reads a comma-separated file with a header line. Double-quoted fields may
// contain commas and doubled quotes. Blank lines are skipped.
Table read(const std::string& path);
Table parse(std::istream& in);

// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

// Quotes a field only when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string_view trim(std::string_view text);

}  // namespace tripdiff::csv
