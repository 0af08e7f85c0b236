#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcsim/allocation.hpp"
#include "dcsim/common.hpp"
#include "dcsim/model.hpp"

namespace dcsim {

struct Lease {
  std::int64_t lease_id = -1;
  std::string task_id;
  // grade -> (bundles, phones) held
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> holdings;
  TimeMs issue_time = 0;
};

// Owns the pool: querying, freezing and releasing of heterogeneous
// resources. Every mutation re-checks the never-over-allocated invariant.
class ResourceManager {
 public:
  explicit ResourceManager(ResourcePool pool) : pool_(std::move(pool)) {}

  const ResourcePool& pool() const { return pool_; }

  bool fits(const std::map<std::string, std::pair<std::int64_t, std::int64_t>>& holdings) const {
    for (const auto& [grade, amounts] : holdings) {
      const PoolEntry* entry = pool_.find(grade);
      if (!entry) return false;
      if (amounts.first > entry->bundles_free || amounts.second > entry->phones_free) return false;
    }
    return true;
  }

  const Lease& freeze(const std::string& task_id,
                      std::map<std::string, std::pair<std::int64_t, std::int64_t>> holdings,
                      TimeMs now) {
    if (!fits(holdings)) throw Error("freeze: insufficient free resources for " + task_id);
    Lease lease;
    lease.lease_id = next_lease_++;
    lease.task_id = task_id;
    lease.holdings = std::move(holdings);
    lease.issue_time = now;
    for (const auto& [grade, amounts] : lease.holdings) {
      auto& entry = pool_.grades.at(grade);
      entry.bundles_free -= amounts.first;
      entry.phones_free -= amounts.second;
    }
    auto [it, _] = outstanding_.emplace(lease.lease_id, std::move(lease));
    check_invariants();
    return it->second;
  }

  void release(std::int64_t lease_id) {
    auto it = outstanding_.find(lease_id);
    if (it == outstanding_.end())
      throw Error("release: unknown or already-released lease " + std::to_string(lease_id));
    for (const auto& [grade, amounts] : it->second.holdings) {
      auto& entry = pool_.grades.at(grade);
      entry.bundles_free += amounts.first;
      entry.phones_free += amounts.second;
    }
    outstanding_.erase(it);
    check_invariants();
  }

  std::size_t outstanding_leases() const { return outstanding_.size(); }

  bool fully_free() const {
    for (const auto& [_, entry] : pool_.grades) {
      if (entry.bundles_free != entry.bundles_total || entry.phones_free != entry.phones_total)
        return false;
    }
    return true;
  }

  void check_invariants() const {
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> held;
    for (const auto& [_, lease] : outstanding_) {
      for (const auto& [grade, amounts] : lease.holdings) {
        held[grade].first += amounts.first;
        held[grade].second += amounts.second;
      }
    }
    for (const auto& [grade, entry] : pool_.grades) {
      if (entry.bundles_free < 0 || entry.phones_free < 0 ||
          entry.bundles_free > entry.bundles_total || entry.phones_free > entry.phones_total)
        throw Error("pool invariant violated for grade " + grade);
      const auto it = held.find(grade);
      const std::int64_t held_bundles = it == held.end() ? 0 : it->second.first;
      const std::int64_t held_phones = it == held.end() ? 0 : it->second.second;
      if (held_bundles + entry.bundles_free != entry.bundles_total ||
          held_phones + entry.phones_free != entry.phones_total)
        throw Error("lease accounting mismatch for grade " + grade);
    }
  }

 private:
  ResourcePool pool_;
  std::map<std::int64_t, Lease> outstanding_;
  std::int64_t next_lease_ = 0;
};

// ---------------------------------------------------------------------------
// Task queue

enum class TaskStatus { Queued, Running, Completed, Failed };

inline const char* task_status_name(TaskStatus s) {
  switch (s) {
    case TaskStatus::Queued: return "queued";
    case TaskStatus::Running: return "running";
    case TaskStatus::Completed: return "completed";
    case TaskStatus::Failed: return "failed";
  }
  return "?";
}

struct TaskRecord {
  TaskSpec spec;
  TaskStatus status = TaskStatus::Queued;
  std::optional<AllocationPlan> plan;
  std::int64_t submit_seq = 0;
  std::int64_t lease_id = -1;
  std::string failure;
};

// Records live in a deque so references handed to runners stay valid as
// later submissions append.
class TaskQueue {
 public:
  TaskRecord& enqueue(TaskSpec spec, const ResourcePool& pool) {
    for (const auto& r : records_) {
      if (r.spec.task_id == spec.task_id)
        throw Error("duplicate task_id: " + spec.task_id);
    }
    const std::vector<std::string> violations = validate_task_spec(spec, pool);
    if (!violations.empty()) {
      std::string msg = "task " + spec.task_id + " failed validation:";
      for (const auto& v : violations) msg += " [" + v + "]";
      throw Error(msg);
    }
    TaskRecord rec;
    rec.spec = std::move(spec);
    rec.submit_seq = next_seq_++;
    records_.push_back(std::move(rec));
    return records_.back();
  }

  std::deque<TaskRecord>& records() { return records_; }
  const std::deque<TaskRecord>& records() const { return records_; }

  TaskRecord* find(const std::string& task_id) {
    for (auto& r : records_)
      if (r.spec.task_id == task_id) return &r;
    return nullptr;
  }

  bool any_queued() const {
    return std::any_of(records_.begin(), records_.end(),
                       [](const TaskRecord& r) { return r.status == TaskStatus::Queued; });
  }

 private:
  std::deque<TaskRecord> records_;
  std::int64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Greedy scheduling

// What a scheduled task needs to run: per grade, the solved split plus the
// parallelism actually leased (slots may be fewer than floor(f/k) when the
// free pool clamped the declared resources).
struct GradeAssignment {
  GradeSpec grade;
  std::int64_t devices = 0;        // N
  std::int64_t benchmarking = 0;   // q
  std::int64_t x_logical = 0;      // solved split
  std::int64_t slots = 0;          // logical slots leased
  std::int64_t phones = 0;         // computing phones leased
};

struct ScheduleDecision {
  std::string task_id;
  AllocationPlan plan;
  std::int64_t lease_id = -1;
  std::vector<GradeAssignment> assignments;
};

namespace sched_detail {

// Plans a task against the currently free pool (declared f/m clamped to free
// counts). Returns nothing when the task cannot run right now.
inline std::optional<ScheduleDecision> try_plan(const TaskRecord& record,
                                                const ResourceManager& rm) {
  const TaskSpec& spec = record.spec;
  AllocationInput input;
  for (std::size_t i = 0; i < spec.grades.size(); ++i) {
    const GradeSpec& g = spec.grades[i];
    const GradeDemand& d = spec.demand.per_grade[i];
    const PoolEntry* entry = rm.pool().find(g.grade_id);
    if (!entry) {
      if (d.devices > 0) return std::nullopt;
      continue;
    }
    GradeSpec clamped = g;
    clamped.f = std::min(g.f, entry->bundles_free);
    clamped.m = std::min(g.m, entry->phones_free);
    if (d.benchmarking > clamped.m) return std::nullopt;  // benchmark phones must exist
    input.grades.push_back(AllocationGrade{clamped, d.devices, d.benchmarking});
  }

  AllocationPlan plan;
  try {
    if (spec.has_allocation_override) {
      std::vector<std::int64_t> x;
      for (const auto& g : input.grades) {
        auto it = spec.allocation_override.find(g.grade.grade_id);
        const std::int64_t cap = std::max<std::int64_t>(0, g.splittable());
        x.push_back(it == spec.allocation_override.end() ? cap : std::min(it->second, cap));
      }
      plan = make_plan(input, std::move(x));
    } else {
      plan = solve_allocation(input);
    }
  } catch (const Error&) {
    return std::nullopt;  // unhostable under the clamped pool; stay queued
  }

  ScheduleDecision decision;
  decision.task_id = spec.task_id;
  decision.plan = plan;
  for (std::size_t i = 0; i < input.grades.size(); ++i) {
    const auto& g = input.grades[i];
    GradeAssignment a;
    a.grade = g.grade;  // carries the clamped f/m
    a.devices = g.devices;
    a.benchmarking = g.benchmarking;
    a.x_logical = plan.x[i];
    const std::int64_t slot_capacity = g.grade.k > 0 ? g.grade.f / g.grade.k : 0;
    a.slots = std::min(plan.x[i], slot_capacity);
    a.phones = std::min(g.splittable() - plan.x[i], g.grade.m);
    decision.assignments.push_back(std::move(a));
  }
  return decision;
}

inline std::map<std::string, std::pair<std::int64_t, std::int64_t>> holdings_for(
    const ScheduleDecision& decision) {
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> holdings;
  for (const auto& a : decision.assignments) {
    const std::int64_t bundles = a.slots * a.grade.k;
    const std::int64_t phones = std::max(a.benchmarking, a.phones);
    if (bundles > 0 || phones > 0) holdings[a.grade.grade_id] = {bundles, phones};
  }
  return holdings;
}

}  // namespace sched_detail

// One greedy pass: scans queued tasks in descending priority (ties to the
// earlier submission), admits every task whose plan fits the free pool, and
// freezes its resources. Unfit tasks are skipped, not blocked on.
inline std::vector<ScheduleDecision> tick_schedule(TaskQueue& queue, ResourceManager& rm,
                                                   TimeMs now) {
  std::vector<TaskRecord*> queued;
  for (auto& r : queue.records())
    if (r.status == TaskStatus::Queued) queued.push_back(&r);
  std::sort(queued.begin(), queued.end(), [](const TaskRecord* a, const TaskRecord* b) {
    if (a->spec.priority != b->spec.priority) return a->spec.priority > b->spec.priority;
    return a->submit_seq < b->submit_seq;
  });

  std::vector<ScheduleDecision> decisions;
  for (TaskRecord* record : queued) {
    auto decision = sched_detail::try_plan(*record, rm);
    if (!decision) continue;
    auto holdings = sched_detail::holdings_for(*decision);
    if (!rm.fits(holdings)) continue;
    const Lease& lease = rm.freeze(record->spec.task_id, std::move(holdings), now);
    decision->lease_id = lease.lease_id;
    record->status = TaskStatus::Running;
    record->plan = decision->plan;
    record->lease_id = lease.lease_id;
    decisions.push_back(std::move(*decision));
  }
  return decisions;
}

}  // namespace dcsim
