#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace polypath {

/// Rounds half away from zero to `decimals` places. Values within 1e-9 (in
/// units of the last kept place) of a half step are treated as exact halves,
/// so 86.55 computed as 86.54999999999999 still displays as 86.6.
inline double round_half_away(double value, int decimals = 1) {
  const double scale = std::pow(10.0, decimals);
  const double scaled = value * scale;
  return std::round(scaled + std::copysign(1e-9, scaled)) / scale;
}

/// Fixed-point text after round_half_away, e.g. format_fixed(0.5, 1) == "0.5".
inline std::string format_fixed(double value, int decimals = 1) {
  const double r = round_half_away(value, decimals);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, r == 0.0 ? 0.0 : r);
  return buf;
}

/// Proportion in [0,1] shown as a one-decimal percentage ("93.5").
inline std::string format_percent(double proportion) { return format_fixed(proportion * 100.0, 1); }

} // namespace polypath
