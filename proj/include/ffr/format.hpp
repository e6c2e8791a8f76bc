#pragma once

// Text formatting of floating-point values: 12 significant digits.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace ffr {

inline constexpr int kOutputDigits = 12;

inline std::string fmt_num(double v) {
  if (v == 0.0) return "0";  // folds -0
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", kOutputDigits, v);
  return buf;
}

// The double nearest to the 12-digit decimal rendering of v.
inline double round_sig(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v == 0.0 ? 0.0 : v;
  return std::strtod(fmt_num(v).c_str(), nullptr);
}

}  // namespace ffr
