#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcsim/common.hpp"
#include "dcsim/deviceflow.hpp"
#include "dcsim/engine.hpp"
#include "dcsim/fl.hpp"
#include "dcsim/model.hpp"
#include "dcsim/trace.hpp"

namespace dcsim {

// Shared storage the edge side uploads computation results to; the cloud
// fetches payloads by the reference carried in each message.
class ObjectStore {
 public:
  struct Payload {
    fl::ModelParams params;
    std::int64_t sample_count = 0;
  };

  void put(const std::string& ref, Payload payload) { entries_[ref] = std::move(payload); }

  std::optional<Payload> fetch(const std::string& ref) {
    auto it = entries_.find(ref);
    if (it == entries_.end()) return std::nullopt;
    Payload out = std::move(it->second);
    entries_.erase(it);
    return out;
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Payload> entries_;
};

// FedAvg: sum of (n_k / sum n) * w_k, elementwise. All-zero sample counts
// degrade to the unweighted mean, reported through the warning flag.
inline fl::ModelParams fedavg_aggregate(
    const std::vector<std::pair<fl::ModelParams, std::int64_t>>& buffered,
    bool* zero_weight_warning = nullptr) {
  if (buffered.empty()) throw Error("fedavg_aggregate: empty buffer");
  const std::size_t dim = buffered.front().first.dim();
  std::int64_t total = 0;
  for (const auto& [params, n] : buffered) {
    if (params.dim() != dim) throw Error("fedavg_aggregate: parameter dimension mismatch");
    if (n < 0) throw Error("fedavg_aggregate: negative sample count");
    total += n;
  }
  if (zero_weight_warning) *zero_weight_warning = total == 0;
  fl::ModelParams out = fl::ModelParams::zeros(dim);
  for (const auto& [params, n] : buffered) {
    const double weight = total == 0
                              ? 1.0 / static_cast<double>(buffered.size())
                              : static_cast<double>(n) / static_cast<double>(total);
    for (std::size_t j = 0; j < dim; ++j) out.weights[j] += weight * params.weights[j];
    out.bias += weight * params.bias;
  }
  return out;
}

// The cloud side of one task: buffers received payloads, fires FedAvg on the
// configured trigger, and versions the global model. Aggregation history is
// append-only; the version increments by exactly one per aggregation.
class CloudService {
 public:
  CloudService(Engine& engine, TrafficTrace& trace, ObjectStore& store, std::string task_id,
               AggregationTrigger trigger, fl::ModelParams initial,
               const fl::Dataset* train_eval, const fl::Dataset* test_eval)
      : engine_(engine),
        trace_(trace),
        store_(store),
        task_id_(std::move(task_id)),
        trigger_(trigger),
        global_(std::move(initial)),
        train_eval_(train_eval),
        test_eval_(test_eval) {}

  // Begins the scheduled-aggregation cadence, when configured.
  void start() {
    started_at_ = engine_.now();
    if (trigger_.kind == AggregationTrigger::Kind::Scheduled) schedule_next_period();
  }

  void receive_message(const ShelfMessage& msg, TimeMs arrival) {
    trace_.record(arrival, task_id_, msg.round, TraceEvent::Receive, msg.device_id, 1);
    ++received_;
    if (msg.payload_ref.empty()) return;  // time-only workloads carry no model
    auto payload = store_.fetch(msg.payload_ref);
    if (!payload) {
      ++corrupt_;
      return;
    }
    buffer_.push_back({std::move(payload->params), msg.sample_count});
    buffered_samples_ += msg.sample_count;
    if (trigger_.kind == AggregationTrigger::Kind::SampleThreshold &&
        buffered_samples_ >= trigger_.samples) {
      aggregate(false);
    }
  }

  // End-of-task flush: one final aggregation over any leftovers, flagged.
  void finalize() {
    finalized_ = true;
    if (!buffer_.empty()) aggregate(true);
  }

  // Halts the scheduled-aggregation cadence without a flush (failure path).
  void stop() { finalized_ = true; }

  const fl::ModelParams& global() const { return global_; }
  std::int64_t version() const { return version_; }
  const std::vector<AggregationRecord>& history() const { return history_; }
  std::int64_t corrupt_count() const { return corrupt_; }
  std::int64_t received_count() const { return received_; }
  std::int64_t zero_weight_warnings() const { return zero_weight_warnings_; }

 private:
  void schedule_next_period() {
    engine_.schedule_at(started_at_ + (period_index_ + 1) * trigger_.period, [this]() {
      if (finalized_) return;
      ++period_index_;
      if (!buffer_.empty()) aggregate(false);  // empty boundary: no version bump
      schedule_next_period();
    });
  }

  void aggregate(bool end_of_task_flush) {
    bool zero_warn = false;
    global_ = fedavg_aggregate(buffer_, &zero_warn);
    if (zero_warn) ++zero_weight_warnings_;
    ++version_;

    AggregationRecord rec;
    rec.version = version_;
    rec.t = engine_.now();
    rec.messages = static_cast<std::int64_t>(buffer_.size());
    rec.samples = buffered_samples_;
    rec.end_of_task_flush = end_of_task_flush;
    if (train_eval_ && !train_eval_->rows.empty()) {
      const fl::Evaluation eval = fl::evaluate(global_, *train_eval_);
      rec.train_acc = eval.accuracy;
      rec.loss = eval.loss;
    }
    if (test_eval_ && !test_eval_->rows.empty())
      rec.test_acc = fl::evaluate(global_, *test_eval_).accuracy;
    history_.push_back(rec);
    trace_.record(engine_.now(), task_id_, 0, TraceEvent::Aggregate, "", rec.messages);

    buffer_.clear();
    buffered_samples_ = 0;
  }

  Engine& engine_;
  TrafficTrace& trace_;
  ObjectStore& store_;
  std::string task_id_;
  AggregationTrigger trigger_;
  fl::ModelParams global_;
  const fl::Dataset* train_eval_;
  const fl::Dataset* test_eval_;

  std::vector<std::pair<fl::ModelParams, std::int64_t>> buffer_;
  std::int64_t buffered_samples_ = 0;
  std::int64_t version_ = 0;
  std::int64_t received_ = 0;
  std::int64_t corrupt_ = 0;
  std::int64_t zero_weight_warnings_ = 0;
  std::vector<AggregationRecord> history_;
  TimeMs started_at_ = 0;
  std::int64_t period_index_ = 0;
  bool finalized_ = false;
};

}  // namespace dcsim
