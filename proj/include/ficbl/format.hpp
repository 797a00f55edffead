#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

#include "ficbl/error.hpp"

namespace ficbl {

/// Decimal text with 17 significant digits; parses back to the same double.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Strict decimal parse of the whole string.
inline double parse_real(std::string_view text) {
  double x = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw DomainError("not a number: '" + std::string(text) + "'");
  }
  return x;
}

}  // namespace ficbl
