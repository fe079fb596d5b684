#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quasitest/core.hpp"
#include "quasitest/error.hpp"

namespace quasitest {

/// How to read a sample file. Columns are x, y and an optional delta
/// (1 = uncensored); header names are matched case-insensitively.
struct InputSpec {
  std::string path;
  char delimiter = ',';
  bool header = true;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline double parse_double(std::string_view field, std::size_t row, std::string_view column, const std::string& source) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": column '" + std::string(column) +
                                    "' is not a number: '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses a sample; rows are numbered from 1 counting the header line.
inline Sample read_sample(std::istream& in, const InputSpec& spec = {}, const std::string& source = "input") {
  std::size_t ix = 0, iy = 1;
  std::optional<std::size_t> idelta;
  std::size_t columns = 0;
  std::vector<Observation> obs;
  std::string line;
  std::size_t row = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, spec.delimiter);
    if (first) {
      first = false;
      if (spec.header) {
        std::optional<std::size_t> fx, fy;
        for (std::size_t k = 0; k < fields.size(); ++k) {
          const auto name = detail::lower(fields[k]);
          if (name == "x") fx = k;
          else if (name == "y") fy = k;
          else if (name == "delta") idelta = k;
        }
        if (!fx || !fy) fail(ErrorCode::ParseError, source + ": row 1: header must name columns x and y");
        ix = *fx;
        iy = *fy;
        columns = fields.size();
        continue;
      }
      columns = fields.size();
      if (columns < 2 || columns > 3) {
        fail(ErrorCode::ParseError, source + ": row 1: expected 2 or 3 columns without a header");
      }
      if (columns == 3) idelta = 2;
    }
    if (fields.size() != columns) {
      fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": expected " + std::to_string(columns) +
                                      " fields, found " + std::to_string(fields.size()));
    }
    Observation o;
    o.x = detail::parse_double(fields[ix], row, "x", source);
    o.y = detail::parse_double(fields[iy], row, "y", source);
    if (idelta) {
      const double d = detail::parse_double(fields[*idelta], row, "delta", source);
      if (d != 0.0 && d != 1.0) {
        fail(ErrorCode::ParseError, source + ": row " + std::to_string(row) + ": delta must be 0 or 1");
      }
      o.delta = static_cast<int>(d);
    }
    obs.push_back(o);
  }
  if (obs.empty()) fail(ErrorCode::EmptyInput, source + ": no data rows");
  return Sample(std::move(obs), idelta.has_value());
}

inline Sample read_sample(const InputSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + spec.path + "'");
  return read_sample(in, spec, spec.path);
}

}  // namespace quasitest
