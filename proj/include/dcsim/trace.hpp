#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dcsim/common.hpp"
#include "dcsim/rng.hpp"

namespace dcsim {

enum class TraceEvent { Emit, Shelve, Dispatch, Drop, Receive, Aggregate, Flush };

inline const char* trace_event_name(TraceEvent e) {
  switch (e) {
    case TraceEvent::Emit: return "emit";
    case TraceEvent::Shelve: return "shelve";
    case TraceEvent::Dispatch: return "dispatch";
    case TraceEvent::Drop: return "drop";
    case TraceEvent::Receive: return "receive";
    case TraceEvent::Aggregate: return "aggregate";
    case TraceEvent::Flush: return "flush";
  }
  return "?";
}

struct TraceRow {
  TimeMs t = 0;
  std::string task_id;
  std::int64_t round = 0;
  TraceEvent event = TraceEvent::Emit;
  std::string device_id;  // empty on batch-level rows
  std::int64_t count = 0;
  std::int64_t cumulative = 0;  // running total of count per (task, event)
};

// Append-only event log shared by every module of a run. Rows are recorded in
// event-execution order, which the engine makes deterministic.
class TrafficTrace {
 public:
  void record(TimeMs t, const std::string& task_id, std::int64_t round, TraceEvent event,
              const std::string& device_id, std::int64_t count) {
    auto& cum = cumulative_[{task_id, event}];
    cum += count;
    rows_.push_back(TraceRow{t, task_id, round, event, device_id, count, cum});
  }

  const std::vector<TraceRow>& rows() const { return rows_; }

  std::int64_t total(const std::string& task_id, TraceEvent event) const {
    auto it = cumulative_.find({task_id, event});
    return it == cumulative_.end() ? 0 : it->second;
  }

  void write_csv(const std::string& path, std::uint64_t seed) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write trace file " + path);
    out << "# " << kTraceVersion << " seed=" << seed << " rng=" << kRngId << "\n";
    out << "t_ms,task_id,round,event,device_id,count,cumulative\n";
    for (const auto& r : rows_) {
      out << r.t << ',' << r.task_id << ',' << r.round << ',' << trace_event_name(r.event) << ','
          << r.device_id << ',' << r.count << ',' << r.cumulative << '\n';
    }
  }

 private:
  std::vector<TraceRow> rows_;
  std::map<std::pair<std::string, TraceEvent>, std::int64_t> cumulative_;
};

struct MetricSample {
  std::string device_id;
  std::string grade;
  int stage = 1;  // 1..5
  TimeMs t = 0;
  double current_uA = 0.0;
  double voltage_mV = 0.0;
  double cpu_pct = 0.0;
  double mem_kb = 0.0;
  double bandwidth_B = 0.0;
};

class MetricTrace {
 public:
  void add(MetricSample sample) { samples_.push_back(std::move(sample)); }
  const std::vector<MetricSample>& samples() const { return samples_; }

  void write_csv(const std::string& path, std::uint64_t seed) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write metric trace " + path);
    out << "# " << kTraceVersion << " seed=" << seed << " rng=" << kRngId << "\n";
    out << "device_id,grade,stage,t_ms,current_uA,voltage_mV,cpu_pct,mem_kb,bandwidth_B\n";
    for (const auto& s : samples_) {
      out << s.device_id << ',' << s.grade << ',' << s.stage << ',' << s.t << ','
          << format_double(s.current_uA) << ',' << format_double(s.voltage_mV) << ','
          << format_double(s.cpu_pct) << ',' << format_double(s.mem_kb) << ','
          << format_double(s.bandwidth_B) << '\n';
    }
  }

 private:
  std::vector<MetricSample> samples_;
};

struct AggregationRecord {
  std::int64_t version = 0;
  TimeMs t = 0;
  std::int64_t messages = 0;
  std::int64_t samples = 0;
  double train_acc = 0.0;
  double loss = 0.0;
  double test_acc = 0.0;
  bool end_of_task_flush = false;
};

inline void write_aggregation_csv(const std::string& path, std::uint64_t seed,
                                  const std::vector<AggregationRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write aggregation history " + path);
  out << "# " << kTraceVersion << " seed=" << seed << " rng=" << kRngId << "\n";
  out << "version,t_ms,messages,samples,train_acc,loss,test_acc\n";
  for (const auto& r : history) {
    out << r.version << ',' << r.t << ',' << r.messages << ',' << r.samples << ','
        << format_double(r.train_acc) << ',' << format_double(r.loss) << ','
        << format_double(r.test_acc) << '\n';
  }
}

}  // namespace dcsim
