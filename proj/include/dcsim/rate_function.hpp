#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dcsim/common.hpp"

namespace dcsim {

// One piece of a user-defined transmission-rate curve y = f(t). The function
// must be single-valued, bounded and nonnegative on its sub-domain; piecewise
// discontinuities between segments are allowed.
struct RateSegment {
  enum class Kind { NormalPdf, SinPlusOne, CosPlusOne, ExpBase, Constant, Polynomial };

  Kind kind = Kind::Constant;
  double lo = 0.0;
  double hi = 1.0;
  double mu = 0.0;              // NormalPdf
  double sigma = 1.0;           // NormalPdf
  double base = 2.0;            // ExpBase: base^t
  double value = 1.0;           // Constant
  std::vector<double> coeffs;   // Polynomial: sum coeffs[i] * t^i

  bool operator==(const RateSegment&) const = default;

  double eval(double t) const {
    switch (kind) {
      case Kind::NormalPdf: {
        const double z = (t - mu) / sigma;
        return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
      }
      case Kind::SinPlusOne:
        return std::sin(t) + 1.0;
      case Kind::CosPlusOne:
        return std::cos(t) + 1.0;
      case Kind::ExpBase:
        return std::pow(base, t);
      case Kind::Constant:
        return value;
      case Kind::Polynomial: {
        double acc = 0.0;
        for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * t + coeffs[i];
        return acc;
      }
    }
    return 0.0;
  }
};

struct RateFunctionSpec {
  std::vector<RateSegment> segments;

  bool operator==(const RateFunctionSpec&) const = default;

  double domain_lo() const {
    double lo = segments.front().lo;
    for (const auto& s : segments) lo = std::min(lo, s.lo);
    return lo;
  }
  double domain_hi() const {
    double hi = segments.front().hi;
    for (const auto& s : segments) hi = std::max(hi, s.hi);
    return hi;
  }

  // Segments are right-open except the last one, which owns its upper bound.
  double eval(double t) const {
    const RateSegment* last = nullptr;
    for (const auto& s : segments) {
      if (t >= s.lo && t < s.hi) return s.eval(t);
      if (t == s.hi) last = &s;
    }
    if (last) return last->eval(t);
    return 0.0;
  }

  void validate() const {
    if (segments.empty()) throw Error("rate function has no segments");
    for (const auto& s : segments) {
      if (!(s.lo < s.hi)) throw Error("rate segment domain must satisfy lo < hi");
      if (s.kind == RateSegment::Kind::NormalPdf && s.sigma <= 0.0)
        throw Error("normal_pdf sigma must be positive");
      if (s.kind == RateSegment::Kind::ExpBase && s.base <= 0.0)
        throw Error("exp_base base must be positive");
    }
    // Nonnegativity and boundedness are checked by sampling.
    const double lo = domain_lo(), hi = domain_hi();
    for (int i = 0; i <= 1024; ++i) {
      const double t = lo + (hi - lo) * i / 1024.0;
      const double y = eval(t);
      if (!std::isfinite(y)) throw Error("rate function is unbounded at t=" + format_double(t));
      if (y < 0.0) throw Error("rate function is negative at t=" + format_double(t));
    }
  }
};

// Composite trapezoid over [lo, hi] with a fixed uniform subsample count.
inline double trapezoid_auc(const RateFunctionSpec& fn, double lo, double hi, int subsamples = 128) {
  const double h = (hi - lo) / subsamples;
  double acc = 0.5 * (fn.eval(lo) + fn.eval(hi));
  for (int i = 1; i < subsamples; ++i) acc += fn.eval(lo + i * h);
  return acc * h;
}

}  // namespace dcsim
