#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dcsim/allocation.hpp"
#include "dcsim/common.hpp"
#include "dcsim/model.hpp"
#include "dcsim/resources.hpp"
#include "dcsim/trace.hpp"

namespace dcsim {

struct RoundReport {
  std::int64_t round = 0;
  TimeMs start = 0;
  TimeMs comp_end = 0;  // last computation finish of the round
  TimeMs barrier = 0;   // when the round's dispatch plan finished firing
  std::int64_t emitted = 0;
  // Last finish offset (relative to round start) per grade and side.
  std::map<std::string, DurationMs> logical_span;
  std::map<std::string, DurationMs> device_span;
};

struct TaskCounts {
  std::int64_t emitted = 0;
  std::int64_t shelved = 0;
  std::int64_t dispatched = 0;
  std::int64_t delivered = 0;
  std::int64_t dropped = 0;
  std::int64_t flushed = 0;
  std::int64_t residual_after_flush = 0;
  std::int64_t duplicates = 0;
  std::int64_t corrupt = 0;
  std::int64_t shortfalls = 0;
  std::int64_t discard_clamps = 0;
};

struct TaskReport {
  std::string task_id;
  TaskStatus status = TaskStatus::Queued;
  std::string failure;
  std::uint64_t seed = 0;
  std::string rng_id = kRngId;
  TaskSpec spec;
  AllocationPlan plan;
  std::vector<RoundReport> rounds;
  TaskCounts counts;
  std::vector<AggregationRecord> aggregations;
  std::int64_t final_version = 0;
  double final_train_acc = 0.0;
  double final_loss = 0.0;
  double final_test_acc = 0.0;
  TimeMs completed_at = 0;
  std::size_t engine_events_at_completion = 0;
  std::string out_dir;
  bool out_dir_env_override = false;
  std::string traffic_csv;
  std::string metrics_csv;
  std::string aggregations_csv;
};

inline json task_report_to_json(const TaskReport& r) {
  json doc;
  doc["task_id"] = r.task_id;
  doc["status"] = task_status_name(r.status);
  if (!r.failure.empty()) doc["failure"] = r.failure;
  doc["seed"] = r.seed;
  doc["rng"] = r.rng_id;
  doc["spec"] = task_spec_to_json(r.spec);
  doc["allocation"] = allocation_plan_to_json(r.plan);

  json rounds = json::array();
  for (const auto& rr : r.rounds) {
    json rj;
    rj["round"] = rr.round;
    rj["start_ms"] = rr.start;
    rj["comp_end_ms"] = rr.comp_end;
    rj["barrier_ms"] = rr.barrier;
    rj["emitted"] = rr.emitted;
    json spans = json::object();
    for (const auto& [grade, span] : rr.logical_span) spans[grade] = span;
    rj["logical_span_ms"] = std::move(spans);
    json dspans = json::object();
    for (const auto& [grade, span] : rr.device_span) dspans[grade] = span;
    rj["device_span_ms"] = std::move(dspans);
    rounds.push_back(std::move(rj));
  }
  doc["rounds"] = std::move(rounds);

  json counts;
  counts["emitted"] = r.counts.emitted;
  counts["shelved"] = r.counts.shelved;
  counts["dispatched"] = r.counts.dispatched;
  counts["delivered"] = r.counts.delivered;
  counts["dropped"] = r.counts.dropped;
  counts["flushed"] = r.counts.flushed;
  counts["residual_after_flush"] = r.counts.residual_after_flush;
  counts["duplicates"] = r.counts.duplicates;
  counts["corrupt"] = r.counts.corrupt;
  counts["shortfalls"] = r.counts.shortfalls;
  counts["discard_clamps"] = r.counts.discard_clamps;
  doc["counts"] = std::move(counts);

  json aggs = json::array();
  for (const auto& a : r.aggregations) {
    json aj;
    aj["version"] = a.version;
    aj["t_ms"] = a.t;
    aj["messages"] = a.messages;
    aj["samples"] = a.samples;
    aj["train_acc"] = a.train_acc;
    aj["loss"] = a.loss;
    aj["test_acc"] = a.test_acc;
    aj["end_of_task_flush"] = a.end_of_task_flush;
    aggs.push_back(std::move(aj));
  }
  doc["aggregations"] = std::move(aggs);

  json fin;
  fin["version"] = r.final_version;
  fin["train_acc"] = r.final_train_acc;
  fin["loss"] = r.final_loss;
  fin["test_acc"] = r.final_test_acc;
  doc["final"] = std::move(fin);

  json engine;
  engine["completed_at_ms"] = r.completed_at;
  engine["events_processed"] = r.engine_events_at_completion;
  doc["engine"] = std::move(engine);

  doc["out_dir"] = r.out_dir;
  doc["out_dir_env_override"] = r.out_dir_env_override;
  json files;
  files["traffic_csv"] = r.traffic_csv;
  files["metrics_csv"] = r.metrics_csv;
  files["aggregations_csv"] = r.aggregations_csv;
  doc["files"] = std::move(files);
  return doc;
}

// ---------------------------------------------------------------------------
// Trace reading (for the report/audit path)

inline std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read trace file " + path);
  std::vector<TraceRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("t_ms,", 0) == 0) continue;  // header
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(pos));
        break;
      }
      cells.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (cells.size() != 7) throw Error("malformed trace row in " + path + ": " + line);
    TraceRow row;
    row.t = std::stoll(cells[0]);
    row.task_id = cells[1];
    row.round = std::stoll(cells[2]);
    const std::string& ev = cells[3];
    if (ev == "emit") row.event = TraceEvent::Emit;
    else if (ev == "shelve") row.event = TraceEvent::Shelve;
    else if (ev == "dispatch") row.event = TraceEvent::Dispatch;
    else if (ev == "drop") row.event = TraceEvent::Drop;
    else if (ev == "receive") row.event = TraceEvent::Receive;
    else if (ev == "aggregate") row.event = TraceEvent::Aggregate;
    else if (ev == "flush") row.event = TraceEvent::Flush;
    else throw Error("unknown trace event '" + ev + "' in " + path);
    row.device_id = cells[4];
    row.count = std::stoll(cells[5]);
    row.cumulative = std::stoll(cells[6]);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_trace_rows_csv(const std::string& path, std::uint64_t seed,
                                 const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace file " + path);
  out << "# " << kTraceVersion << " seed=" << seed << " rng=" << kRngId << "\n";
  out << "t_ms,task_id,round,event,device_id,count,cumulative\n";
  for (const auto& r : rows) {
    out << r.t << ',' << r.task_id << ',' << r.round << ',' << trace_event_name(r.event) << ','
        << r.device_id << ',' << r.count << ',' << r.cumulative << '\n';
  }
}

}  // namespace dcsim
