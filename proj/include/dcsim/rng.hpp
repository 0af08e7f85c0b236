#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "dcsim/common.hpp"

namespace dcsim {

// Generator identifier recorded in every trace header.
inline constexpr const char* kRngId = "splitmix64-v1";

inline std::uint64_t splitmix64_step(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic per-purpose random stream. The state is derived by absorbing
// (seed, fnv1a(label), id) through successive splitmix64 steps, so streams
// with different derivation tuples are decorrelated while the same tuple
// always replays the same sequence on every platform.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label, std::uint64_t id = 0) {
    std::uint64_t s = seed;
    splitmix64_step(s);
    s ^= fnv1a64(label);
    splitmix64_step(s);
    s ^= id;
    splitmix64_step(s);
    state_ = s;
  }

  std::uint64_t next_u64() { return splitmix64_step(state_); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n) via rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw Error("next_below: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double next_normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace dcsim
