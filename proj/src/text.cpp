#include "beamlink/text.hpp"

#include <charconv>

#include "beamlink/error.hpp"

namespace beamlink::text {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_float(float v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error(ErrorKind::corrupt, "unterminated quote in CSV record");
  out.push_back(std::move(cur));
  return out;
}

bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

namespace {

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::corrupt, "malformed " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

double parse_double(std::string_view s, std::string_view what) {
  // from_chars rejects a leading '+', which some writers emit.
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s == "nan" || s == "inf" || s == "-inf")
    throw Error(ErrorKind::corrupt, "non-finite " + std::string(what));
  return parse_number<double>(s, what);
}

float parse_float(std::string_view s, std::string_view what) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s == "nan" || s == "inf" || s == "-inf")
    throw Error(ErrorKind::corrupt, "non-finite " + std::string(what));
  return parse_number<float>(s, what);
}

std::int64_t parse_int(std::string_view s, std::string_view what) {
  return parse_number<std::int64_t>(s, what);
}

std::uint64_t parse_uint(std::string_view s, std::string_view what) {
  return parse_number<std::uint64_t>(s, what);
}

std::optional<double> parse_optional_double(std::string_view s, std::string_view what) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, what);
}

std::string join(const std::vector<std::string>& fields, char sep) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += sep;
    out += fields[i];
  }
  return out;
}

}  // namespace beamlink::text
