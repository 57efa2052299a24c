// Small helpers for the CSV-style text formats.
#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace beamlink::text {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
std::string format_float(float v);

/// Fixed-point with `digits` decimals.
std::string format_fixed(double v, int digits);

/// Quotes a field if it contains a comma, quote or line break.
std::string csv_escape(std::string_view field);

/// Splits one CSV record. Handles quoted fields with doubled quotes.
/// Throws Error(corrupt) on an unterminated quote.
std::vector<std::string> csv_split(std::string_view line);

/// Reads the next non-empty line; strips a trailing '\r'.
bool next_line(std::istream& in, std::string& line);

/// Strict parsers; throw Error(corrupt) naming `what` on malformed input.
double parse_double(std::string_view s, std::string_view what);
float parse_float(std::string_view s, std::string_view what);
std::int64_t parse_int(std::string_view s, std::string_view what);
std::uint64_t parse_uint(std::string_view s, std::string_view what);
std::optional<double> parse_optional_double(std::string_view s, std::string_view what);

std::string join(const std::vector<std::string>& fields, char sep = ',');

}  // namespace beamlink::text
