#pragma once

// Number formatting shared by prompts, outcome boxes and CSV output.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "scmlab/core.hpp"

namespace scmlab::fmt {

/// Shortest round-trip text with a trailing ".0" for integral values: 100.0, 0.5.
inline std::string real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

inline std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

/// Integral values print without a decimal point, others in shortest form.
inline std::string compact(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    if (v == 0.0) return "0";
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T, typename F>
std::string list(std::span<const T> values, F&& f) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += f(values[i]);
  }
  return out + "]";
}

inline std::string int_list(std::span<const Units> values) {
  return list(values, [](Units v) { return std::to_string(v); });
}

inline std::string real_list(std::span<const double> values) { return list(values, real); }

inline std::string compact_list(std::span<const double> values) { return list(values, compact); }

inline std::string fixed_list(std::span<const double> values, int precision) {
  return list(values, [precision](double v) { return fixed(v, precision); });
}

}  // namespace scmlab::fmt
