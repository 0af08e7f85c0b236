#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dcsim/common.hpp"
#include "dcsim/model.hpp"

namespace dcsim {

// Input to the hybrid allocation solver: per grade, the resource/timing
// parameters plus the demand (N devices, q of them reserved for benchmarking).
struct AllocationGrade {
  GradeSpec grade;
  std::int64_t devices = 0;       // N
  std::int64_t benchmarking = 0;  // q

  std::int64_t splittable() const { return devices - benchmarking; }  // N - q
};

struct AllocationInput {
  std::vector<AllocationGrade> grades;

  static AllocationInput from_spec(const TaskSpec& spec) {
    AllocationInput in;
    for (std::size_t i = 0; i < spec.grades.size(); ++i) {
      in.grades.push_back(AllocationGrade{spec.grades[i], spec.demand.per_grade[i].devices,
                                          spec.demand.per_grade[i].benchmarking});
    }
    return in;
  }
};

struct AllocationPlan {
  std::vector<std::string> grade_ids;
  std::vector<std::int64_t> x;  // devices assigned to logical simulation, per grade
  DurationMs t_logical = 0;     // T_l
  DurationMs t_device = 0;      // T_p
  DurationMs t_total = 0;       // T = max(T_l, T_p)

  std::int64_t sum_x() const {
    std::int64_t s = 0;
    for (auto v : x) s += v;
    return s;
  }
};

namespace alloc_detail {

inline constexpr DurationMs kInfeasible = std::numeric_limits<DurationMs>::max();

// ceil(k*x / f) * alpha; 0 when x == 0; infeasible when x > 0 with f < k.
inline DurationMs logical_term(const AllocationGrade& g, std::int64_t x) {
  if (x == 0) return 0;
  if (g.grade.f < g.grade.k) return kInfeasible;
  return ceil_div(g.grade.k * x, g.grade.f) * g.grade.alpha;
}

// ceil((N-q-x) / m) * beta + lambda; 0 when the device-side count is 0 (no
// framework startup occurs if no phone is used); infeasible when work exists
// with m == 0.
inline DurationMs device_term(const AllocationGrade& g, std::int64_t x) {
  const std::int64_t n = g.splittable() - x;
  if (n <= 0) return 0;
  if (g.grade.m < 1) return kInfeasible;
  return ceil_div(n, g.grade.m) * g.grade.beta + g.grade.lambda;
}

inline DurationMs grade_cost(const AllocationGrade& g, std::int64_t x) {
  const DurationMs l = logical_term(g, x);
  const DurationMs d = device_term(g, x);
  if (l == kInfeasible || d == kInfeasible) return kInfeasible;
  return std::max(l, d);
}

inline void check_hostable(const AllocationGrade& g) {
  if (g.splittable() > 0 && g.grade.f < g.grade.k && g.grade.m < 1)
    throw Error("grade " + g.grade.grade_id + " unhostable: no logical or phone capacity");
}

}  // namespace alloc_detail

// Single-grade terms, exposed for timing-consistency checks.
inline DurationMs grade_logical_duration(const GradeSpec& grade, std::int64_t x) {
  const DurationMs v = alloc_detail::logical_term(AllocationGrade{grade, x, 0}, x);
  if (v == alloc_detail::kInfeasible) throw Error("no logical capacity for grade " + grade.grade_id);
  return v;
}

inline DurationMs grade_device_duration(const GradeSpec& grade, std::int64_t device_side) {
  const DurationMs v = alloc_detail::device_term(AllocationGrade{grade, device_side, 0}, 0);
  if (v == alloc_detail::kInfeasible) throw Error("no phone capacity for grade " + grade.grade_id);
  return v;
}

// T_l over all grades for a given logical assignment x.
inline DurationMs logical_duration(const AllocationInput& input, const std::vector<std::int64_t>& x) {
  if (x.size() != input.grades.size()) throw Error("logical_duration: x size mismatch");
  DurationMs t = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const DurationMs v = alloc_detail::logical_term(input.grades[i], x[i]);
    if (v == alloc_detail::kInfeasible)
      throw Error("no logical capacity for grade " + input.grades[i].grade.grade_id);
    t = std::max(t, v);
  }
  return t;
}

// T_p over all grades for a given logical assignment x.
inline DurationMs device_duration(const AllocationInput& input, const std::vector<std::int64_t>& x) {
  if (x.size() != input.grades.size()) throw Error("device_duration: x size mismatch");
  DurationMs t = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const DurationMs v = alloc_detail::device_term(input.grades[i], x[i]);
    if (v == alloc_detail::kInfeasible)
      throw Error("no phone capacity for grade " + input.grades[i].grade.grade_id);
    t = std::max(t, v);
  }
  return t;
}

inline AllocationPlan make_plan(const AllocationInput& input, std::vector<std::int64_t> x) {
  AllocationPlan plan;
  for (const auto& g : input.grades) plan.grade_ids.push_back(g.grade.grade_id);
  plan.t_logical = logical_duration(input, x);
  plan.t_device = device_duration(input, x);
  plan.t_total = std::max(plan.t_logical, plan.t_device);
  plan.x = std::move(x);
  return plan;
}

// Minimizes T = max(T_l, T_p) over integer x, then maximizes sum(x) among the
// minimizers (prefer logical simulation); remaining ties resolve to the larger
// x in grade-declaration order. Grades decouple under the max objective: the
// logical term is nondecreasing and the device term nonincreasing in x_i, so
// each grade's optimum sits at the crossing of the two terms (binary search),
// and T* = max over grades of the per-grade minimum. The secondary objective
// is then the largest per-grade x whose logical term still fits under T*.
inline AllocationPlan solve_allocation(const AllocationInput& input) {
  using namespace alloc_detail;
  for (const auto& g : input.grades) check_hostable(g);

  // Phase 1: per-grade minimum cost.
  DurationMs t_star = 0;
  for (const auto& g : input.grades) {
    const std::int64_t hi = g.splittable();
    if (hi <= 0) continue;
    // Smallest x where the nondecreasing logical term reaches the
    // nonincreasing device term; the per-grade optimum is there or one below.
    std::int64_t lo_s = 0, hi_s = hi;
    while (lo_s < hi_s) {
      const std::int64_t mid = lo_s + (hi_s - lo_s) / 2;
      const DurationMs l = logical_term(g, mid);
      const DurationMs d = device_term(g, mid);
      if (l != kInfeasible && (d == kInfeasible || l >= d)) hi_s = mid;
      else lo_s = mid + 1;
    }
    // Candidates: the crossing neighborhood plus both endpoints (endpoints
    // carry the optimum when one side is infeasible, f < k or m == 0).
    DurationMs best = kInfeasible;
    for (std::int64_t x : {std::int64_t{0}, lo_s - 1, lo_s, lo_s + 1, hi}) {
      if (x < 0 || x > hi) continue;
      best = std::min(best, grade_cost(g, x));
    }
    if (best == kInfeasible) throw Error("grade " + g.grade.grade_id + " unhostable");
    t_star = std::max(t_star, best);
  }

  // Phase 2: per grade, the largest x feasible under the global T*.
  std::vector<std::int64_t> x(input.grades.size(), 0);
  for (std::size_t i = 0; i < input.grades.size(); ++i) {
    const auto& g = input.grades[i];
    const std::int64_t cap = g.splittable();
    if (cap <= 0) continue;
    std::int64_t lo = 0, hi = cap, best = -1;
    while (lo <= hi) {
      const std::int64_t mid = lo + (hi - lo) / 2;
      const DurationMs l = logical_term(g, mid);
      if (l != kInfeasible && l <= t_star) {
        best = mid;
        lo = mid + 1;
      } else {
        hi = mid - 1;
      }
    }
    if (best < 0) throw Error("internal: no feasible x under T* for grade " + g.grade.grade_id);
    if (device_term(g, best) > t_star)
      throw Error("internal: device term exceeds T* for grade " + g.grade.grade_id);
    x[i] = best;
  }
  return make_plan(input, std::move(x));
}

// Exhaustive oracle. Enumerates every integer assignment and keeps the
// (min T, max sum x, lexicographically largest x) optimum.
inline AllocationPlan brute_force_allocation(const AllocationInput& input,
                                             std::int64_t guard = 10'000'000) {
  using namespace alloc_detail;
  for (const auto& g : input.grades) check_hostable(g);

  std::int64_t combos = 1;
  for (const auto& g : input.grades) {
    const std::int64_t range = std::max<std::int64_t>(0, g.splittable()) + 1;
    if (combos > guard / range) throw Error("brute_force_allocation: guard exceeded");
    combos *= range;
  }

  const std::size_t n = input.grades.size();
  std::vector<std::int64_t> x(n, 0), best_x;
  DurationMs best_t = kInfeasible;
  std::int64_t best_sum = -1;

  auto consider = [&](const std::vector<std::int64_t>& cand) {
    DurationMs t = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const DurationMs c = grade_cost(input.grades[i], cand[i]);
      if (c == kInfeasible) return;
      t = std::max(t, c);
    }
    std::int64_t sum = 0;
    for (auto v : cand) sum += v;
    if (t < best_t || (t == best_t && sum > best_sum) ||
        (t == best_t && sum == best_sum && cand > best_x)) {
      best_t = t;
      best_sum = sum;
      best_x = cand;
    }
  };

  if (n == 0) return make_plan(input, {});
  while (true) {
    consider(x);
    std::size_t i = 0;
    while (i < n) {
      if (x[i] < std::max<std::int64_t>(0, input.grades[i].splittable())) {
        ++x[i];
        break;
      }
      x[i] = 0;
      ++i;
    }
    if (i == n) break;
  }
  if (best_t == kInfeasible) throw Error("brute_force_allocation: no feasible assignment");
  return make_plan(input, std::move(best_x));
}

// Fixed split: x_i = round-half-up(ratio * (N_i - q_i)). Ratio 1.0 is the
// all-logical Type 1 configuration, 0.0 the all-phone Type 5.
inline AllocationPlan ratio_allocation(const AllocationInput& input, double ratio) {
  if (ratio < 0.0 || ratio > 1.0) throw Error("ratio_allocation: ratio must lie in [0,1]");
  std::vector<std::int64_t> x;
  for (const auto& g : input.grades) {
    const std::int64_t cap = std::max<std::int64_t>(0, g.splittable());
    std::int64_t v = static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(cap) + 0.5));
    x.push_back(std::min(v, cap));
  }
  return make_plan(input, std::move(x));
}

inline json allocation_plan_to_json(const AllocationPlan& plan) {
  json doc;
  json grades = json::array();
  for (std::size_t i = 0; i < plan.x.size(); ++i) {
    json g;
    g["grade_id"] = plan.grade_ids[i];
    g["x"] = plan.x[i];
    grades.push_back(std::move(g));
  }
  doc["grades"] = std::move(grades);
  doc["t_logical_ms"] = plan.t_logical;
  doc["t_device_ms"] = plan.t_device;
  doc["t_total_ms"] = plan.t_total;
  return doc;
}

}  // namespace dcsim
