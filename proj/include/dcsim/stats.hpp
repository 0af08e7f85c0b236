#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcsim/common.hpp"
#include "dcsim/rate_function.hpp"
#include "dcsim/trace.hpp"

namespace dcsim {

// Sample Pearson correlation; nullopt when either series has zero variance.
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("pearson: series must have equal length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

// Per-step dispatch counts of one (task, round), binned from `anchor`.
inline std::vector<double> bin_dispatch_counts(const std::vector<TraceRow>& rows,
                                               const std::string& task_id, std::int64_t round,
                                               TimeMs anchor, DurationMs step,
                                               std::size_t min_bins) {
  if (step <= 0) throw Error("bin_dispatch_counts: step must be positive");
  std::vector<double> bins(min_bins, 0.0);
  for (const auto& r : rows) {
    if (r.event != TraceEvent::Dispatch || r.task_id != task_id || r.round != round) continue;
    if (r.t < anchor) continue;
    const std::size_t b = static_cast<std::size_t>((r.t - anchor) / step);
    if (b >= bins.size()) bins.resize(b + 1, 0.0);
    bins[b] += static_cast<double>(r.count);
  }
  return bins;
}

// Correlation between a target rate curve and the dispatch counts a trace
// actually carries. The curve domain [lo, hi] is mapped affinely onto the
// dispatch window of length `delta` starting at `anchor`; both series are
// binned by `step` and the target is zero past the window end.
inline std::optional<double> curve_fidelity(const RateFunctionSpec& fn, double lo, double hi,
                                            DurationMs delta, const std::vector<TraceRow>& rows,
                                            const std::string& task_id, std::int64_t round,
                                            TimeMs anchor, DurationMs step) {
  if (!(lo < hi)) throw Error("curve_fidelity: domain must satisfy lo < hi");
  if (delta <= 0 || step <= 0) throw Error("curve_fidelity: delta and step must be positive");
  const std::size_t nominal = static_cast<std::size_t>(ceil_div(delta, step));
  std::vector<double> actual = bin_dispatch_counts(rows, task_id, round, anchor, step, nominal);
  bool any = false;
  for (double v : actual) any = any || v != 0.0;
  if (!any) throw Error("curve_fidelity: empty trace window");

  std::vector<double> target(actual.size(), 0.0);
  for (std::size_t j = 0; j < nominal && j < target.size(); ++j) {
    const double span_lo = lo + (hi - lo) * (static_cast<double>(j) * step) / delta;
    const double span_hi = lo + (hi - lo) * std::min<double>(static_cast<double>((j + 1) * step),
                                                             static_cast<double>(delta)) / delta;
    target[j] = trapezoid_auc(fn, span_lo, span_hi);
  }
  return pearson(target, actual);
}

// ---------------------------------------------------------------------------
// Trace auditors

struct CapacityViolation {
  std::string task_id;
  TimeMs window_start = 0;
  std::int64_t forwarded = 0;
};

// Checks that no sliding 1-second window of cloud-bound forwards (receive
// events) carries more than capacity_per_sec messages, per task.
inline std::vector<CapacityViolation> audit_capacity(const std::vector<TraceRow>& rows,
                                                     std::int64_t capacity_per_sec) {
  std::map<std::string, std::vector<std::pair<TimeMs, std::int64_t>>> per_task;
  for (const auto& r : rows) {
    if (r.event != TraceEvent::Receive) continue;
    per_task[r.task_id].push_back({r.t, r.count});
  }
  std::vector<CapacityViolation> violations;
  for (auto& [task, events] : per_task) {
    std::sort(events.begin(), events.end());
    std::size_t head = 0;
    std::int64_t in_window = 0;
    for (std::size_t tail = 0; tail < events.size(); ++tail) {
      in_window += events[tail].second;
      while (events[head].first + 1000 <= events[tail].first) {
        in_window -= events[head].second;
        ++head;
      }
      if (in_window > capacity_per_sec)
        violations.push_back({task, events[head].first, in_window});
    }
  }
  return violations;
}

struct ConservationCounts {
  std::int64_t emitted = 0;
  std::int64_t delivered = 0;
  std::int64_t dropped = 0;
};

// Totals per (task, round); emitted = delivered + dropped must hold once a
// task has run to completion (the end-of-task flush resolves every residual).
inline std::map<std::pair<std::string, std::int64_t>, ConservationCounts> conservation_counts(
    const std::vector<TraceRow>& rows) {
  std::map<std::pair<std::string, std::int64_t>, ConservationCounts> out;
  for (const auto& r : rows) {
    auto& c = out[{r.task_id, r.round}];
    switch (r.event) {
      case TraceEvent::Emit: c.emitted += r.count; break;
      case TraceEvent::Receive: c.delivered += r.count; break;
      case TraceEvent::Drop: c.dropped += r.count; break;
      default: break;
    }
  }
  return out;
}

}  // namespace dcsim
