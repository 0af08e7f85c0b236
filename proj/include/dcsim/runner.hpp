#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcsim/allocation.hpp"
#include "dcsim/cloud.hpp"
#include "dcsim/common.hpp"
#include "dcsim/deviceflow.hpp"
#include "dcsim/emulation.hpp"
#include "dcsim/engine.hpp"
#include "dcsim/fl.hpp"
#include "dcsim/model.hpp"
#include "dcsim/report.hpp"
#include "dcsim/resources.hpp"
#include "dcsim/trace.hpp"

namespace dcsim {

// Drives one admitted task on the shared engine: per round, emulates every
// simulated device (logical slots and phones), routes emissions through
// DeviceFlow under the task's dispatch strategy, and feeds the cloud service.
// Rounds are synchronized on computation plus the round's dispatch plan;
// in-flight stragglers resolve before the end-of-task flush.
class TaskRunner {
 public:
  TaskRunner(Engine& engine, DeviceFlow& flow, TrafficTrace& trace, ResourceManager& rm,
             TaskRecord& record, ScheduleDecision decision,
             std::function<void(const std::string&)> on_complete)
      : engine_(engine),
        flow_(flow),
        trace_(trace),
        rm_(rm),
        record_(record),
        decision_(std::move(decision)),
        on_complete_(std::move(on_complete)),
        task_id_(record.spec.task_id) {}

  void start() {
    report_.task_id = task_id_;
    report_.seed = spec().seed;
    report_.spec = spec();
    report_.plan = decision_.plan;
    try {
      resolve_data();
      setup_delays();
      flow_.configure_task(task_id_, spec().dispatch_strategy, spec().seed);
      cloud_.emplace(engine_, trace_, store_, task_id_, spec().aggregation_trigger,
                     fl::ModelParams::zeros(static_cast<std::size_t>(model_dim_)), train_eval(),
                     test_eval());
      cloud_->start();
      begin_round(1);
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }

  void receive(const ShelfMessage& msg, TimeMs arrival) {
    if (done_ && record_.status == TaskStatus::Failed) return;
    if (cloud_) cloud_->receive_message(msg, arrival);
  }

  const TaskReport& report() const { return report_; }
  TaskReport& report() { return report_; }
  const MetricTrace& metrics() const { return metrics_; }
  const CloudService* cloud() const { return cloud_ ? &*cloud_ : nullptr; }

 private:
  struct ResolvedStep {
    bool has_data = false;
    fl::Dataset full;
    std::vector<fl::Dataset> client_data;        // per global device index
    std::vector<double> client_pos_fraction;
  };

  const TaskSpec& spec() const { return record_.spec; }

  std::int64_t total_devices() const {
    std::int64_t n = 0;
    for (const auto& d : spec().demand.per_grade) n += d.devices;
    return n;
  }

  const fl::Dataset* train_eval() const {
    for (std::size_t i = 0; i < spec().operator_flow.steps.size(); ++i) {
      if (spec().operator_flow.steps[i].kind == OperatorStep::Kind::TrainLr &&
          resolved_[i].has_data)
        return &resolved_[i].full;
    }
    return nullptr;
  }

  const fl::Dataset* test_eval() const { return test_data_.rows.empty() ? nullptr : &test_data_; }

  void resolve_data() {
    const std::int64_t clients = total_devices();
    resolved_.resize(spec().operator_flow.steps.size());
    for (std::size_t i = 0; i < spec().operator_flow.steps.size(); ++i) {
      const OperatorStep& step = spec().operator_flow.steps[i];
      if (step.kind == OperatorStep::Kind::CustomSleep) continue;
      ResolvedStep& rs = resolved_[i];
      std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
      if (is_synthetic_ref(step.dataset_ref)) {
        fl::SyntheticCorpus corpus =
            fl::make_synthetic_corpus(parse_synthetic_ref(step.dataset_ref), spec().seed);
        rs.full = std::move(corpus.train);
        if (test_data_.rows.empty() && !corpus.test.rows.empty()) test_data_ = std::move(corpus.test);
      } else {
        if (step.schema_ref.empty())
          throw Error("dataset " + step.dataset_ref + " needs a schema_ref");
        std::ifstream schema_in(step.schema_ref);
        if (!schema_in) throw Error("cannot open schema " + step.schema_ref);
        std::string schema_text((std::istreambuf_iterator<char>(schema_in)),
                                std::istreambuf_iterator<char>());
        fl::IngestResult ingested = fl::ingest_csv(step.dataset_ref, fl::parse_csv_schema(schema_text));
        rs.full = std::move(ingested.data);
        groups = std::move(ingested.device_groups);
      }
      rs.has_data = true;
      if (model_dim_ == 0) model_dim_ = rs.full.dim;

      rs.client_data.resize(static_cast<std::size_t>(clients));
      rs.client_pos_fraction.assign(static_cast<std::size_t>(clients), 0.0);
      if (static_cast<std::int64_t>(groups.size()) >= clients) {
        // Enough file devices: deal device groups round-robin onto clients,
        // in first-seen order.
        std::size_t g = 0;
        for (auto& [_, rows] : groups) {
          auto& dest = rs.client_data[g % static_cast<std::size_t>(clients)];
          dest.dim = rs.full.dim;
          for (std::size_t row : rows) dest.rows.push_back(rs.full.rows[row]);
          ++g;
        }
        for (std::size_t c = 0; c < rs.client_data.size(); ++c)
          rs.client_pos_fraction[c] = rs.client_data[c].positive_fraction();
      } else {
        RngStream rng(spec().seed, "partition", static_cast<std::uint64_t>(i));
        std::vector<fl::ClientDataset> parts =
            fl::partition(rs.full, clients, step.partition, rng);
        for (std::size_t c = 0; c < parts.size(); ++c) {
          rs.client_pos_fraction[c] = parts[c].positive_fraction;
          rs.client_data[c] = std::move(parts[c].data);
        }
      }
    }
  }

  void setup_delays() {
    const std::int64_t n = total_devices();
    delays_.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      RngStream stream(spec().seed, "response-delay", static_cast<std::uint64_t>(i));
      delays_[static_cast<std::size_t>(i)] = sample_response_delay(spec().response_delay, stream);
    }
    if (spec().response_delay.kind != ResponseDelayModel::Kind::RightTailNormal ||
        !spec().response_delay.ctr_linked)
      return;
    const std::vector<double>* fractions = nullptr;
    for (const auto& rs : resolved_) {
      if (rs.has_data) {
        fractions = &rs.client_pos_fraction;
        break;
      }
    }
    if (!fractions) return;
    // Higher-CTR clients transmit faster: rank devices by positive fraction
    // and hand the sorted delays out smallest-first.
    std::vector<std::size_t> by_ctr(delays_.size());
    for (std::size_t i = 0; i < by_ctr.size(); ++i) by_ctr[i] = i;
    std::sort(by_ctr.begin(), by_ctr.end(), [&](std::size_t a, std::size_t b) {
      if ((*fractions)[a] != (*fractions)[b]) return (*fractions)[a] > (*fractions)[b];
      return a < b;
    });
    std::vector<DurationMs> sorted = delays_;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t rank = 0; rank < by_ctr.size(); ++rank) delays_[by_ctr[rank]] = sorted[rank];
  }

  void begin_round(std::int64_t round) {
    const TimeMs t0 = engine_.now();
    RoundReport rr;
    rr.round = round;
    rr.start = t0;

    const fl::ModelParams snapshot = cloud_->global();  // adopted at round boundaries
    DurationMs comp_span = 0;
    std::int64_t offset = 0;
    for (const auto& a : decision_.assignments) {
      for (std::int64_t b = 0; b < a.benchmarking; ++b) {
        const std::int64_t global_index = offset + b;
        RngStream noise(spec().seed, "metrics",
                        static_cast<std::uint64_t>(global_index) * 1000003ull +
                            static_cast<std::uint64_t>(round));
        benchmark_metric_trace(metrics_, device_name(a.grade.grade_id, b), a.grade.grade_id,
                               StageProfile::for_grade(a.grade.grade_id), t0, 1000, noise);
      }

      DurationMs logical_span = 0;
      for (const auto& df : logical_finish_offsets(a.x_logical, a.slots, a.grade.alpha)) {
        logical_span = std::max(logical_span, df.finish_offset);
        const std::int64_t ordinal = a.benchmarking + df.local_index;
        launch_device(round, t0, offset + ordinal, a.grade.grade_id, ordinal, df.finish_offset,
                      snapshot);
      }
      if (a.x_logical > 0) rr.logical_span[a.grade.grade_id] = logical_span;

      const std::int64_t device_side = a.devices - a.benchmarking - a.x_logical;
      DurationMs device_span = 0;
      for (const auto& df :
           phone_finish_offsets(device_side, a.phones, a.grade.beta, a.grade.lambda, round == 1)) {
        device_span = std::max(device_span, df.finish_offset);
        const std::int64_t ordinal = a.benchmarking + a.x_logical + df.local_index;
        launch_device(round, t0, offset + ordinal, a.grade.grade_id, ordinal, df.finish_offset,
                      snapshot);
      }
      if (device_side > 0) rr.device_span[a.grade.grade_id] = device_span;

      comp_span = std::max(comp_span, std::max(logical_span, device_span));
      rr.emitted += a.x_logical + device_side;
      offset += a.devices;
    }
    rr.comp_end = t0 + comp_span;
    report_.rounds.push_back(rr);

    // Two hops so every emission arriving exactly at comp_end is shelved
    // before the round plan reads the shelf.
    engine_.schedule_at(rr.comp_end, [this, round]() {
      if (done_) return;
      engine_.schedule_at(engine_.now(), [this, round]() {
        if (done_) return;
        try {
          RoundReport& current = report_.rounds.back();
          const TimeMs plan_last = flow_.execute_round_plan(task_id_, current.comp_end);
          const TimeMs barrier = std::max(current.comp_end, plan_last);
          engine_.schedule_at(barrier, [this, round]() {
            if (done_) return;
            report_.rounds.back().barrier = engine_.now();
            if (round < spec().rounds) {
              try {
                begin_round(round + 1);
              } catch (const std::exception& e) {
                fail(e.what());
              }
            } else {
              const TimeMs t_fin = std::max(engine_.now(), last_ready_);
              engine_.schedule_at(t_fin, [this]() {
                if (!done_) flush_and_finalize();
              });
            }
          });
        } catch (const std::exception& e) {
          fail(e.what());
        }
      });
    });
  }

  void launch_device(std::int64_t round, TimeMs round_start, std::int64_t global_index,
                     const std::string& grade_id, std::int64_t ordinal, DurationMs finish_offset,
                     const fl::ModelParams& snapshot) {
    DeviceContext ctx;
    ctx.global = &snapshot;
    ctx.step_data.resize(resolved_.size(), nullptr);
    for (std::size_t i = 0; i < resolved_.size(); ++i) {
      if (resolved_[i].has_data)
        ctx.step_data[i] = &resolved_[i].client_data[static_cast<std::size_t>(global_index)];
    }
    FlowResult flow_result = execute_operator_flow(ctx, spec().operator_flow);

    ShelfMessage msg;
    msg.task_id = task_id_;
    msg.round = round;
    msg.device_id = device_name(grade_id, ordinal);
    msg.grade = grade_id;
    msg.sample_count = flow_result.sample_count;
    msg.emit_time = round_start + finish_offset;
    if (flow_result.payload) {
      msg.payload_ref = task_id_ + "/" + std::to_string(round) + "/" + msg.device_id;
      store_.put(msg.payload_ref,
                 ObjectStore::Payload{std::move(*flow_result.payload), flow_result.sample_count});
    }

    const TimeMs ready = msg.emit_time + delays_[static_cast<std::size_t>(global_index)];
    last_ready_ = std::max(last_ready_, ready);
    engine_.schedule_at(msg.emit_time, [this, msg = std::move(msg), ready]() {
      if (done_) return;
      trace_.record(engine_.now(), msg.task_id, msg.round, TraceEvent::Emit, msg.device_id, 1);
      engine_.schedule_at(ready, [this, msg]() {
        if (done_) return;
        flow_.on_message(msg);
      });
    });
  }

  static std::string device_name(const std::string& grade_id, std::int64_t ordinal) {
    return grade_id + "-" + std::to_string(ordinal);
  }

  void flush_and_finalize() {
    try {
      const TimeMs last_arrival = flow_.flush_task(task_id_);
      engine_.schedule_at(std::max(engine_.now(), last_arrival), [this]() {
        if (done_) return;
        cloud_->finalize();
        complete();
      });
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }

  void complete() {
    done_ = true;
    record_.status = TaskStatus::Completed;
    finish_report();
    rm_.release(record_.lease_id);
    store_.clear();
    on_complete_(task_id_);
  }

  void fail(const std::string& why) {
    done_ = true;
    record_.status = TaskStatus::Failed;
    record_.failure = why;
    report_.failure = why;
    if (cloud_) cloud_->stop();
    finish_report();
    rm_.release(record_.lease_id);
    store_.clear();
    on_complete_(task_id_);
  }

  void finish_report() {
    report_.status = record_.status;
    report_.counts.emitted = trace_.total(task_id_, TraceEvent::Emit);
    report_.counts.shelved = trace_.total(task_id_, TraceEvent::Shelve);
    report_.counts.dispatched = trace_.total(task_id_, TraceEvent::Dispatch);
    report_.counts.delivered = trace_.total(task_id_, TraceEvent::Receive);
    report_.counts.dropped = trace_.total(task_id_, TraceEvent::Drop);
    report_.counts.flushed = trace_.total(task_id_, TraceEvent::Flush);
    try {
      report_.counts.residual_after_flush = static_cast<std::int64_t>(flow_.shelf_size(task_id_));
      const DispatcherStats& stats = flow_.stats(task_id_);
      report_.counts.duplicates = stats.duplicates;
      report_.counts.shortfalls = stats.shortfalls;
      report_.counts.discard_clamps = stats.discard_clamps;
    } catch (const Error&) {
      // task failed before the dispatcher was configured
    }
    if (cloud_) {
      report_.counts.corrupt = cloud_->corrupt_count();
      report_.aggregations = cloud_->history();
      report_.final_version = cloud_->version();
      if (!cloud_->history().empty()) {
        const AggregationRecord& last = cloud_->history().back();
        report_.final_train_acc = last.train_acc;
        report_.final_loss = last.loss;
        report_.final_test_acc = last.test_acc;
      }
    }
    report_.completed_at = engine_.now();
    report_.engine_events_at_completion = engine_.processed();
  }

  Engine& engine_;
  DeviceFlow& flow_;
  TrafficTrace& trace_;
  ResourceManager& rm_;
  TaskRecord& record_;
  ScheduleDecision decision_;
  std::function<void(const std::string&)> on_complete_;
  std::string task_id_;

  ObjectStore store_;
  std::optional<CloudService> cloud_;
  MetricTrace metrics_;
  std::vector<ResolvedStep> resolved_;
  fl::Dataset test_data_;
  std::vector<DurationMs> delays_;
  std::int64_t model_dim_ = 0;
  TimeMs last_ready_ = 0;
  bool done_ = false;
  TaskReport report_;
};

// ---------------------------------------------------------------------------
// Batch coordination

// Owns the engine, the shared traffic trace, the pool, and one runner per
// admitted task. Scheduling ticks fire at submission time and whenever a
// task completes.
class Coordinator {
 public:
  explicit Coordinator(ResourcePool pool)
      : rm_(std::move(pool)),
        flow_(engine_, trace_, [this](const ShelfMessage& msg, TimeMs arrival) {
          auto it = runners_.find(msg.task_id);
          if (it != runners_.end()) it->second->receive(msg, arrival);
        }) {}

  TaskRecord& submit(TaskSpec spec) { return queue_.enqueue(std::move(spec), rm_.pool()); }

  void run() {
    tick();
    engine_.run_all();
    for (auto& record : queue_.records()) {
      if (record.status == TaskStatus::Queued) {
        record.status = TaskStatus::Failed;
        record.failure = "insufficient resources: task never fit the pool";
      }
    }
  }

  Engine& engine() { return engine_; }
  const TrafficTrace& trace() const { return trace_; }
  TaskQueue& queue() { return queue_; }
  ResourceManager& resources() { return rm_; }

  const TaskRunner* runner(const std::string& task_id) const {
    auto it = runners_.find(task_id);
    return it == runners_.end() ? nullptr : it->second.get();
  }

  TaskRunner* runner_mutable(const std::string& task_id) {
    auto it = runners_.find(task_id);
    return it == runners_.end() ? nullptr : it->second.get();
  }

  // Per-task trace slice (the shared log filtered by task).
  std::vector<TraceRow> task_trace(const std::string& task_id) const {
    std::vector<TraceRow> rows;
    for (const auto& r : trace_.rows())
      if (r.task_id == task_id) rows.push_back(r);
    return rows;
  }

 private:
  void tick() {
    for (auto& decision : tick_schedule(queue_, rm_, engine_.now())) {
      TaskRecord* record = queue_.find(decision.task_id);
      const std::string task_id = decision.task_id;
      auto runner = std::make_unique<TaskRunner>(
          engine_, flow_, trace_, rm_, *record, std::move(decision),
          [this](const std::string&) { tick(); });
      TaskRunner* ptr = runner.get();
      runners_.emplace(task_id, std::move(runner));
      ptr->start();
    }
  }

  Engine engine_;
  TrafficTrace trace_;
  ResourceManager rm_;
  TaskQueue queue_;
  DeviceFlow flow_;
  std::map<std::string, std::unique_ptr<TaskRunner>> runners_;
};

// ---------------------------------------------------------------------------
// Output writing

struct RunOutput {
  std::string out_dir;
  bool env_override = false;
};

inline void write_task_outputs(Coordinator& coordinator, const RunOutput& out) {
  namespace fs = std::filesystem;
  for (auto& record : coordinator.queue().records()) {
    const std::string task_dir = out.out_dir + "/" + record.spec.task_id;
    fs::create_directories(task_dir);
    TaskRunner* runner = coordinator.runner_mutable(record.spec.task_id);

    TaskReport fallback;
    if (!runner) {
      fallback.task_id = record.spec.task_id;
      fallback.status = record.status;
      fallback.failure = record.failure;
      fallback.seed = record.spec.seed;
      fallback.spec = record.spec;
    }
    TaskReport& report = runner ? runner->report() : fallback;
    report.out_dir = out.out_dir;
    report.out_dir_env_override = out.env_override;
    report.traffic_csv = task_dir + "/traffic.csv";
    report.metrics_csv = task_dir + "/metrics.csv";
    report.aggregations_csv = task_dir + "/aggregations.csv";

    write_trace_rows_csv(report.traffic_csv, record.spec.seed,
                         coordinator.task_trace(record.spec.task_id));
    if (runner) {
      runner->metrics().write_csv(report.metrics_csv, record.spec.seed);
      write_aggregation_csv(report.aggregations_csv, record.spec.seed, report.aggregations);
    }

    std::ofstream rf(task_dir + "/report.json");
    if (!rf) throw Error("cannot write report for " + record.spec.task_id);
    rf << task_report_to_json(report).dump(2) << "\n";
  }
}

inline void write_batch_report(Coordinator& coordinator, const RunOutput& out) {
  json doc;
  json tasks = json::array();
  for (const auto& record : coordinator.queue().records()) {
    json tj;
    tj["task_id"] = record.spec.task_id;
    tj["status"] = task_status_name(record.status);
    tj["priority"] = record.spec.priority;
    tj["submit_seq"] = record.submit_seq;
    if (!record.failure.empty()) tj["failure"] = record.failure;
    tasks.push_back(std::move(tj));
  }
  doc["tasks"] = std::move(tasks);
  json pool = json::array();
  for (const auto& [grade, entry] : coordinator.resources().pool().grades) {
    json gj;
    gj["grade_id"] = grade;
    gj["bundles_total"] = entry.bundles_total;
    gj["bundles_free"] = entry.bundles_free;
    gj["phones_total"] = entry.phones_total;
    gj["phones_free"] = entry.phones_free;
    pool.push_back(std::move(gj));
  }
  doc["pool"] = std::move(pool);
  json engine;
  engine["events_processed"] = coordinator.engine().processed();
  engine["end_time_ms"] = coordinator.engine().now();
  doc["engine"] = std::move(engine);
  std::ofstream f(out.out_dir + "/batch_report.json");
  if (!f) throw Error("cannot write batch report");
  f << doc.dump(2) << "\n";
}

}  // namespace dcsim
