#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>

namespace pavglm {

// Shortest decimal text that parses back to exactly `v`.
inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Value rounded to 12 significant digits, then printed shortest. Used for
// quantities reconstructed from rescaled times (8/120 * 120 prints as "8").
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return shortest(std::strtod(buf, nullptr));
}

}  // namespace pavglm
