#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace bayescv {

/// printf("%.*g") with `digits` significant digits; the CSV/table format.
inline std::string format_g(double value, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return buf;
}

/// Shortest representation that round-trips exactly.
inline std::string format_exact(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace bayescv
