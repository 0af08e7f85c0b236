#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dcsim {

// All virtual clocks and durations are integer milliseconds.
using TimeMs = std::int64_t;
using DurationMs = std::int64_t;

inline constexpr const char* kTraceVersion = "dcsim-trace-v1";

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised by the task-spec loader: malformed document, unknown or missing field.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

inline std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  if (den <= 0) throw Error("ceil_div: nonpositive divisor");
  if (num <= 0) return 0;
  return (num + den - 1) / den;
}

// Seconds (decimal, as written in spec files) to integer milliseconds.
inline DurationMs seconds_to_ms(double seconds) {
  return static_cast<DurationMs>(std::llround(seconds * 1000.0));
}

inline double ms_to_seconds(DurationMs ms) { return static_cast<double>(ms) / 1000.0; }

// FNV-1a, used for stable label and feature hashing across platforms.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Project-wide float formatting: 9 significant digits, deterministic.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

}  // namespace dcsim
