#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dcsim/common.hpp"
#include "dcsim/engine.hpp"
#include "dcsim/model.hpp"
#include "dcsim/rng.hpp"
#include "dcsim/trace.hpp"

namespace dcsim {

// An edge-to-cloud message: the computation result reference a device uploads
// when its share of the round completes.
struct ShelfMessage {
  std::string task_id;
  std::int64_t round = 0;
  std::string device_id;
  std::string grade;
  std::int64_t sample_count = 0;
  std::string payload_ref;
  TimeMs emit_time = 0;
};

struct CompiledPoint {
  TimeMs fire_time = 0;
  std::int64_t count = 0;
  double p_fail = 0.0;
  std::int64_t discard = 0;
};

struct CompiledDispatchPlan {
  std::vector<CompiledPoint> points;
  std::int64_t total = 0;  // M; point counts sum to this exactly
  DurationMs step = 0;     // chosen discretization h
};

// ---------------------------------------------------------------------------
// Dropout

// Bernoulli(p_fail) per message in input order, then a uniform
// without-replacement discard from the survivors. The partition is
// exhaustive; delivered messages keep their FIFO order.
struct DropoutResult {
  std::vector<ShelfMessage> delivered;
  std::vector<ShelfMessage> dropped;
  bool discard_clamped = false;
};

inline DropoutResult apply_dropout(std::vector<ShelfMessage> messages, double p_fail,
                                   std::int64_t discard_count, RngStream& rng) {
  if (p_fail < 0.0 || p_fail > 1.0) throw Error("apply_dropout: p_fail must lie in [0,1]");
  DropoutResult out;
  std::vector<ShelfMessage> survivors;
  for (auto& msg : messages) {
    if (rng.next_double() < p_fail) out.dropped.push_back(std::move(msg));
    else survivors.push_back(std::move(msg));
  }
  std::int64_t discard = discard_count;
  if (discard > static_cast<std::int64_t>(survivors.size())) {
    discard = static_cast<std::int64_t>(survivors.size());
    out.discard_clamped = true;
  }
  std::vector<bool> discarded(survivors.size(), false);
  std::vector<std::size_t> alive(survivors.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  for (std::int64_t d = 0; d < discard; ++d) {
    const std::size_t pick = static_cast<std::size_t>(rng.next_below(alive.size()));
    discarded[alive[pick]] = true;
    alive[pick] = alive.back();
    alive.pop_back();
  }
  for (std::size_t i = 0; i < survivors.size(); ++i) {
    if (discarded[i]) out.dropped.push_back(std::move(survivors[i]));
    else out.delivered.push_back(std::move(survivors[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time-interval compilation

// Discretizes a rate curve into (fire_time, count) points. The curve domain
// is mapped affinely onto the target interval; per-step counts follow the
// per-step AUC share of the total AUC, rounded by largest remainder (ties to
// the earlier step) so they sum to M exactly. The step starts at 1 s and is
// halved (floor 100 ms) while any count exceeds what capacity clears in one
// step; any residue past that is left to execution-time pacing spillover.
inline CompiledDispatchPlan compile_time_interval(const DispatchStrategySpec& spec,
                                                  std::int64_t pending, TimeMs base_time) {
  if (spec.kind != DispatchStrategySpec::Kind::TimeInterval)
    throw Error("compile_time_interval: strategy is not time_interval");
  if (pending < 0) throw Error("compile_time_interval: negative pending count");
  spec.rate_fn.validate();

  CompiledDispatchPlan plan;
  plan.step = 1000;
  if (pending == 0) return plan;

  const double lo = spec.domain_lo, hi = spec.domain_hi;
  const DurationMs delta = spec.interval_delta;

  while (true) {
    const std::int64_t nsteps = ceil_div(delta, plan.step);
    std::vector<double> weights(nsteps, 0.0);
    double total_auc = 0.0;
    for (std::int64_t j = 0; j < nsteps; ++j) {
      const double t0 = static_cast<double>(j * plan.step);
      const double t1 = std::min<double>(static_cast<double>((j + 1) * plan.step),
                                         static_cast<double>(delta));
      const double span_lo = lo + (hi - lo) * t0 / static_cast<double>(delta);
      const double span_hi = lo + (hi - lo) * t1 / static_cast<double>(delta);
      weights[j] = trapezoid_auc(spec.rate_fn, span_lo, span_hi);
      total_auc += weights[j];
    }
    if (total_auc <= 0.0) throw Error("degenerate rate function: zero total AUC with pending messages");

    // Largest-remainder apportionment.
    std::vector<std::int64_t> counts(nsteps, 0);
    std::vector<std::pair<double, std::int64_t>> remainders;
    std::int64_t assigned = 0;
    for (std::int64_t j = 0; j < nsteps; ++j) {
      const double raw = static_cast<double>(pending) * weights[j] / total_auc;
      counts[j] = static_cast<std::int64_t>(raw);
      assigned += counts[j];
      remainders.push_back({raw - static_cast<double>(counts[j]), j});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::int64_t r = 0; r < pending - assigned; ++r) ++counts[remainders[r].second];

    const std::int64_t clearable = spec.capacity_per_sec * plan.step / 1000;
    std::int64_t worst = 0;
    for (auto c : counts) worst = std::max(worst, c);
    if (worst > clearable && plan.step > 100) {
      plan.step = std::max<DurationMs>(100, plan.step / 2);
      continue;
    }

    plan.points.clear();
    for (std::int64_t j = 0; j < nsteps; ++j) {
      plan.points.push_back(CompiledPoint{base_time + spec.interval_start + j * plan.step,
                                          counts[j], spec.p_fail, spec.discard_per_interval});
    }
    plan.total = pending;
    return plan;
  }
}

// ---------------------------------------------------------------------------
// Dispatcher machinery

// Enforces the per-shelf forwarding capacity: the i-th forwarded message
// arrives at least one second after the (i - capacity)-th, so every sliding
// 1-second window carries at most capacity messages.
class Pacer {
 public:
  explicit Pacer(std::int64_t capacity_per_sec)
      : capacity_(capacity_per_sec), ring_(static_cast<std::size_t>(capacity_per_sec), 0) {
    if (capacity_per_sec < 1) throw Error("Pacer: capacity must be >= 1");
  }

  TimeMs arrival_for(TimeMs fire_time) {
    TimeMs t = fire_time;
    if (sent_ >= static_cast<std::int64_t>(ring_.size()))
      t = std::max(t, ring_[static_cast<std::size_t>(sent_ % capacity_)] + 1000);
    ring_[static_cast<std::size_t>(sent_ % capacity_)] = t;
    ++sent_;
    last_ = std::max(last_, t);
    return t;
  }

  TimeMs last_arrival() const { return last_; }

 private:
  std::int64_t capacity_;
  std::vector<TimeMs> ring_;
  std::int64_t sent_ = 0;
  TimeMs last_ = 0;
};

class Shelf {
 public:
  // FIFO append; returns false for a duplicate (task_id, round, device_id).
  bool push(ShelfMessage msg) {
    std::string key = std::to_string(msg.round) + '|' + msg.device_id;
    if (!seen_.insert(std::move(key)).second) return false;
    queue_.push_back(std::move(msg));
    return true;
  }

  std::vector<ShelfMessage> pop(std::size_t n) {
    n = std::min(n, queue_.size());
    std::vector<ShelfMessage> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(std::move(queue_.front()));
      queue_.pop_front();
    }
    return out;
  }

  std::size_t size() const { return queue_.size(); }

 private:
  std::deque<ShelfMessage> queue_;
  std::unordered_set<std::string> seen_;
};

struct DispatcherStats {
  std::int64_t duplicates = 0;
  std::int64_t shortfalls = 0;       // plan points that found fewer messages than planned
  std::int64_t discard_clamps = 0;
  std::int64_t flushed = 0;          // residual messages delivered by the end-of-task flush
  DurationMs last_plan_step = 0;
};

// The device-behavior traffic controller: routes emissions to per-task
// shelves and executes the task's dispatch strategy against the virtual
// clock, forwarding survivors to the downstream receiver under capacity
// pacing. Dispatchers of different shelves share nothing but the engine.
class DeviceFlow {
 public:
  using Receiver = std::function<void(const ShelfMessage&, TimeMs arrival)>;

  DeviceFlow(Engine& engine, TrafficTrace& trace, Receiver receiver)
      : engine_(engine), trace_(trace), receiver_(std::move(receiver)) {}

  void configure_task(const std::string& task_id, const DispatchStrategySpec& strategy,
                      std::uint64_t task_seed) {
    auto [it, inserted] = dispatchers_.try_emplace(task_id, strategy, task_seed);
    if (!inserted) throw Error("deviceflow: task " + task_id + " already configured");
  }

  // Sorter: shelf keyed by task_id, created on first use by configure_task.
  void on_message(ShelfMessage msg) {
    Dispatcher& d = dispatcher(msg.task_id);
    trace_.record(engine_.now(), msg.task_id, msg.round, TraceEvent::Shelve, msg.device_id, 1);
    if (!d.shelf.push(msg)) {
      ++d.stats.duplicates;
      trace_.record(engine_.now(), msg.task_id, msg.round, TraceEvent::Drop, msg.device_id, 1);
      return;
    }
    if (d.strategy.kind == DispatchStrategySpec::Kind::RealTimeAccumulated) pump_rta(msg.task_id, d);
  }

  // Rule-based strategies run once per round, anchored at the round's
  // computation end. Returns the last plan fire time (round_end when the
  // strategy is arrival-driven) so the caller can place the round barrier.
  TimeMs execute_round_plan(const std::string& task_id, TimeMs round_end) {
    Dispatcher& d = dispatcher(task_id);
    switch (d.strategy.kind) {
      case DispatchStrategySpec::Kind::RealTimeAccumulated:
        return round_end;
      case DispatchStrategySpec::Kind::TimePoint: {
        const TimeMs base =
            d.strategy.time_base == TimeBase::RelativeToRoundEnd ? round_end : 0;
        TimeMs last = round_end;
        for (const auto& p : d.strategy.points) {
          const TimeMs fire = std::max(engine_.now(), base + p.t);
          schedule_point(task_id, CompiledPoint{fire, p.count, p.p_fail, p.discard});
          last = std::max(last, fire);
        }
        return last;
      }
      case DispatchStrategySpec::Kind::TimeInterval: {
        const TimeMs base =
            d.strategy.time_base == TimeBase::RelativeToRoundEnd ? round_end : 0;
        const std::int64_t pending = static_cast<std::int64_t>(d.shelf.size());
        CompiledDispatchPlan plan = compile_time_interval(d.strategy, pending, base);
        d.stats.last_plan_step = plan.step;
        TimeMs last = round_end;
        for (const auto& p : plan.points) {
          if (p.count == 0) continue;
          const TimeMs fire = std::max(engine_.now(), p.fire_time);
          schedule_point(task_id, CompiledPoint{fire, p.count, p.p_fail, p.discard});
          last = std::max(last, fire);
        }
        return last;
      }
    }
    return round_end;
  }

  // Delivers every residual shelved message. Strategies cycle until the task
  // completes; leftovers are flushed exactly once at task end. Returns the
  // time the last forwarded message arrives downstream.
  TimeMs flush_task(const std::string& task_id) {
    Dispatcher& d = dispatcher(task_id);
    auto residual = d.shelf.pop(d.shelf.size());
    if (!residual.empty()) {
      record_batch(task_id, residual, TraceEvent::Flush);
      // Accumulated dispatching models per-message transmission failure; a
      // rule-based flush has no associated point, so no dropout applies.
      const double p_fail = d.strategy.kind == DispatchStrategySpec::Kind::RealTimeAccumulated
                                ? d.strategy.p_fail
                                : 0.0;
      d.stats.flushed += static_cast<std::int64_t>(residual.size());
      forward(task_id, std::move(residual), p_fail, 0);
    }
    return d.pacer.last_arrival();
  }

  std::size_t shelf_size(const std::string& task_id) { return dispatcher(task_id).shelf.size(); }

  const DispatcherStats& stats(const std::string& task_id) { return dispatcher(task_id).stats; }

 private:
  struct Dispatcher {
    Dispatcher(const DispatchStrategySpec& spec, std::uint64_t task_seed)
        : strategy(spec), rng(task_seed, "dropout"), pacer(spec.capacity_per_sec) {}
    DispatchStrategySpec strategy;
    Shelf shelf;
    RngStream rng;
    Pacer pacer;
    DispatcherStats stats;
    std::size_t threshold_cursor = 0;
  };

  Dispatcher& dispatcher(const std::string& task_id) {
    auto it = dispatchers_.find(task_id);
    if (it == dispatchers_.end()) throw Error("deviceflow: unknown task " + task_id);
    return it->second;
  }

  void pump_rta(const std::string& task_id, Dispatcher& d) {
    while (true) {
      const std::int64_t threshold =
          d.strategy.thresholds[d.threshold_cursor % d.strategy.thresholds.size()];
      if (static_cast<std::int64_t>(d.shelf.size()) < threshold) break;
      auto batch = d.shelf.pop(static_cast<std::size_t>(threshold));
      ++d.threshold_cursor;
      record_batch(task_id, batch, TraceEvent::Dispatch);
      forward(task_id, std::move(batch), d.strategy.p_fail, 0);
    }
  }

  void schedule_point(const std::string& task_id, CompiledPoint point) {
    engine_.schedule_at(point.fire_time, [this, task_id, point]() {
      Dispatcher& d = dispatcher(task_id);
      if (static_cast<std::int64_t>(d.shelf.size()) < point.count) ++d.stats.shortfalls;
      auto batch = d.shelf.pop(static_cast<std::size_t>(point.count));
      if (batch.empty()) return;
      record_batch(task_id, batch, TraceEvent::Dispatch);
      forward(task_id, std::move(batch), point.p_fail, point.discard);
    });
  }

  // Dropout, then capacity-paced forwarding to the receiver.
  void forward(const std::string& task_id, std::vector<ShelfMessage> batch, double p_fail,
               std::int64_t discard) {
    Dispatcher& d = dispatcher(task_id);
    DropoutResult result = apply_dropout(std::move(batch), p_fail, discard, d.rng);
    if (result.discard_clamped) ++d.stats.discard_clamps;
    for (const auto& msg : result.dropped)
      trace_.record(engine_.now(), task_id, msg.round, TraceEvent::Drop, msg.device_id, 1);
    for (auto& msg : result.delivered) {
      const TimeMs arrival = d.pacer.arrival_for(engine_.now());
      engine_.schedule_at(arrival, [this, m = std::move(msg)]() { receiver_(m, engine_.now()); });
    }
  }

  // One trace row per round represented in the batch, in FIFO order.
  void record_batch(const std::string& task_id, const std::vector<ShelfMessage>& batch,
                    TraceEvent event) {
    std::size_t i = 0;
    while (i < batch.size()) {
      std::size_t j = i;
      while (j < batch.size() && batch[j].round == batch[i].round) ++j;
      trace_.record(engine_.now(), task_id, batch[i].round, event, "",
                    static_cast<std::int64_t>(j - i));
      i = j;
    }
  }

  Engine& engine_;
  TrafficTrace& trace_;
  Receiver receiver_;
  std::map<std::string, Dispatcher> dispatchers_;
};

}  // namespace dcsim
