#include <doctest.h>

#include <vector>

#include "dcsim/runner.hpp"
#include "dcsim/stats.hpp"

using namespace dcsim;

namespace {

TaskSpec sleep_task(const std::string& id, std::int64_t devices, std::int64_t rounds = 1,
                    std::int64_t f = 10, std::int64_t m = 0, std::int64_t q = 0) {
  TaskSpec spec;
  spec.task_id = id;
  spec.rounds = rounds;
  GradeSpec g;
  g.grade_id = "High";
  g.k = 1;
  g.f = f;
  g.m = m;
  g.alpha = 1000;
  g.beta = 3000;
  g.lambda = 1000;
  spec.grades.push_back(g);
  spec.demand.per_grade.push_back(GradeDemand{"High", devices, q});
  OperatorStep sleep;
  sleep.kind = OperatorStep::Kind::CustomSleep;
  sleep.sleep = 1000;
  spec.operator_flow.steps.push_back(sleep);
  return spec;
}

TaskSpec train_task(const std::string& id, std::int64_t devices, std::int64_t rounds) {
  TaskSpec spec = sleep_task(id, devices, rounds, devices, 0, 0);
  spec.operator_flow.steps.clear();
  OperatorStep train;
  train.kind = OperatorStep::Kind::TrainLr;
  train.dataset_ref = "synthetic:rows=" + std::to_string(devices * 4) + ",dim=32,test=100";
  train.epochs = 2;
  train.learning_rate = 0.2;
  spec.operator_flow.steps.push_back(train);
  spec.aggregation_trigger.kind = AggregationTrigger::Kind::SampleThreshold;
  spec.aggregation_trigger.samples = devices * 4;
  return spec;
}

}  // namespace

TEST_CASE("one device, one round, trivial sleep operator") {
  Coordinator coordinator(ResourcePool::from_totals({{"High", 10, 0}}));
  coordinator.submit(sleep_task("t1", 1));
  coordinator.run();
  const TaskRunner* runner = coordinator.runner("t1");
  REQUIRE(runner);
  const TaskReport& report = runner->report();
  CHECK(report.status == TaskStatus::Completed);
  REQUIRE(report.rounds.size() == 1);
  CHECK(report.counts.emitted == 1);
  CHECK(report.counts.delivered == 1);
  CHECK(report.counts.dropped == 0);
  CHECK(report.rounds[0].comp_end == 1000);  // alpha
}

TEST_CASE("three rounds span the emulated round lengths") {
  Coordinator coordinator(ResourcePool::from_totals({{"High", 10, 0}}));
  coordinator.submit(sleep_task("t1", 10, 3, 5));
  coordinator.run();
  const TaskReport& report = coordinator.runner("t1")->report();
  CHECK(report.status == TaskStatus::Completed);
  REQUIRE(report.rounds.size() == 3);
  // 10 devices over 5 slots at 1 s each: every round spans 2 s, back to back.
  for (int r = 0; r < 3; ++r) {
    CHECK(report.rounds[r].start == 2000 * r);
    CHECK(report.rounds[r].comp_end == 2000 * (r + 1));
  }
  CHECK(report.counts.emitted == 30);
  CHECK(report.counts.delivered == 30);
}

TEST_CASE("emulated spans equal the allocation terms per grade and side") {
  TaskSpec spec = sleep_task("t1", 20, 2, 8, 3, 0);
  Coordinator coordinator(ResourcePool::from_totals({{"High", 8, 3}}));
  coordinator.submit(spec);
  coordinator.run();
  const TaskReport& report = coordinator.runner("t1")->report();
  REQUIRE(report.status == TaskStatus::Completed);
  const AllocationPlan& plan = report.plan;
  const GradeSpec& g = spec.grades[0];
  const std::int64_t x = plan.x[0];
  const std::int64_t device_side = 20 - x;
  for (const auto& rr : report.rounds) {
    if (x > 0) CHECK(rr.logical_span.at("High") == grade_logical_duration(g, x));
    if (device_side > 0) {
      const DurationMs expected = grade_device_duration(g, device_side);
      if (rr.round == 1) CHECK(rr.device_span.at("High") == expected);
      else CHECK(rr.device_span.at("High") == expected - g.lambda);
    }
  }
}

TEST_CASE("benchmarking devices produce metrics, never emissions") {
  Coordinator coordinator(ResourcePool::from_totals({{"High", 10, 2}}));
  coordinator.submit(sleep_task("t1", 5, 1, 10, 2, 2));
  coordinator.run();
  const TaskRunner* runner = coordinator.runner("t1");
  const TaskReport& report = runner->report();
  CHECK(report.status == TaskStatus::Completed);
  CHECK(report.counts.emitted == 3);  // 5 devices, 2 benchmarking
  REQUIRE(!runner->metrics().samples().empty());
  // Benchmark ordinals are 0 and 1; emissions must come from ordinals >= 2.
  std::set<std::string> bench_ids;
  for (const auto& s : runner->metrics().samples()) bench_ids.insert(s.device_id);
  CHECK(bench_ids == std::set<std::string>{"High-0", "High-1"});
  for (const auto& row : coordinator.task_trace("t1")) {
    if (row.event == TraceEvent::Emit) {
      CHECK(row.device_id != "High-0");
      CHECK(row.device_id != "High-1");
    }
  }
}

TEST_CASE("a failing dataset marks the task failed and restores the pool") {
  TaskSpec spec = sleep_task("t1", 4);
  OperatorStep train;
  train.kind = OperatorStep::Kind::TrainLr;
  train.dataset_ref = "synthetic:rows=1,dim=8";  // fewer rows than clients
  spec.operator_flow.steps.push_back(train);
  Coordinator coordinator(ResourcePool::from_totals({{"High", 10, 0}}));
  coordinator.submit(spec);
  coordinator.run();
  const TaskRecord* record = coordinator.queue().find("t1");
  CHECK(record->status == TaskStatus::Failed);
  CHECK(record->failure.find("too few rows") != std::string::npos);
  CHECK(coordinator.resources().fully_free());
}

TEST_CASE("training tasks aggregate and version the global model") {
  Coordinator coordinator(ResourcePool::from_totals({{"High", 20, 0}}));
  coordinator.submit(train_task("t1", 20, 3));
  coordinator.run();
  const TaskReport& report = coordinator.runner("t1")->report();
  REQUIRE(report.status == TaskStatus::Completed);
  CHECK(report.final_version == 3);  // one aggregation per round at this threshold
  REQUIRE(report.aggregations.size() == 3);
  for (const auto& a : report.aggregations) {
    CHECK(a.messages == 20);
    CHECK(a.samples == 80);
    CHECK(a.train_acc > 0.0);
    CHECK(a.test_acc > 0.0);
  }
  // Loss improves over rounds on this synthetic corpus.
  CHECK(report.aggregations.back().loss < report.aggregations.front().loss);
}

TEST_CASE("two concurrent tasks conserve messages and capacity") {
  Coordinator coordinator(ResourcePool::from_totals({{"High", 30, 0}}));
  TaskSpec a = sleep_task("a", 40, 2, 15);
  a.dispatch_strategy.thresholds = {7};
  a.dispatch_strategy.p_fail = 0.2;
  a.seed = 11;
  TaskSpec b = sleep_task("b", 25, 3, 15);
  b.dispatch_strategy.thresholds = {3, 9};
  b.seed = 22;
  coordinator.submit(a);
  coordinator.submit(b);
  coordinator.run();
  for (const auto& id : {std::string("a"), std::string("b")}) {
    const TaskReport& report = coordinator.runner(id)->report();
    CHECK(report.status == TaskStatus::Completed);
    CHECK(report.counts.delivered + report.counts.dropped == report.counts.emitted);
    CHECK(report.counts.residual_after_flush == 0);
  }
  CHECK(coordinator.resources().fully_free());
  CHECK(audit_capacity(coordinator.trace().rows(), 700).empty());
  // b's dropout is off, so every emission lands.
  CHECK(coordinator.runner("b")->report().counts.delivered ==
        coordinator.runner("b")->report().counts.emitted);
}

TEST_CASE("a queued task that can never fit is failed after the run") {
  Coordinator coordinator(ResourcePool::from_totals({{"High", 4, 0}}));
  TaskSpec huge = sleep_task("huge", 10, 1, 80);
  huge.grades[0].k = 8;
  coordinator.submit(sleep_task("ok", 4, 1, 4));
  coordinator.submit(huge);
  coordinator.run();
  CHECK(coordinator.queue().find("ok")->status == TaskStatus::Completed);
  CHECK(coordinator.queue().find("huge")->status == TaskStatus::Failed);
  CHECK(coordinator.queue().find("huge")->failure.find("insufficient resources") !=
        std::string::npos);
}

TEST_CASE("replay determinism: identical runs produce identical traces") {
  auto run_once = [] {
    Coordinator coordinator(ResourcePool::from_totals({{"High", 12, 3}}));
    TaskSpec spec = sleep_task("t1", 18, 2, 12, 3, 1);
    spec.seed = 777;
    spec.dispatch_strategy.thresholds = {5};
    spec.dispatch_strategy.p_fail = 0.35;
    spec.response_delay.kind = ResponseDelayModel::Kind::RightTailNormal;
    spec.response_delay.sigma = 2.0;
    spec.response_delay.scale = 10000;
    coordinator.submit(spec);
    coordinator.run();
    std::vector<TraceRow> rows = coordinator.task_trace("t1");
    return rows;
  };
  const auto first = run_once();
  const auto second = run_once();
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].t == second[i].t);
    CHECK(first[i].event == second[i].event);
    CHECK(first[i].device_id == second[i].device_id);
    CHECK(first[i].count == second[i].count);
    CHECK(first[i].cumulative == second[i].cumulative);
  }
}

TEST_CASE("time-interval tasks compile the round plan against the shelf") {
  TaskSpec spec = sleep_task("t1", 50, 1, 50);
  spec.dispatch_strategy.kind = DispatchStrategySpec::Kind::TimeInterval;
  RateSegment seg;
  seg.kind = RateSegment::Kind::Constant;
  seg.lo = 0.0;
  seg.hi = 1.0;
  seg.value = 2.0;
  spec.dispatch_strategy.rate_fn.segments.push_back(seg);
  spec.dispatch_strategy.domain_lo = 0.0;
  spec.dispatch_strategy.domain_hi = 1.0;
  spec.dispatch_strategy.interval_delta = 10000;
  Coordinator coordinator(ResourcePool::from_totals({{"High", 50, 0}}));
  coordinator.submit(spec);
  coordinator.run();
  const TaskReport& report = coordinator.runner("t1")->report();
  CHECK(report.status == TaskStatus::Completed);
  CHECK(report.counts.delivered == 50);
  CHECK(report.counts.dispatched == 50);
  CHECK(report.counts.flushed == 0);
  // All devices finish together at alpha; the plan spreads 50 messages over
  // ten uniform steps anchored at the round end.
  std::vector<std::int64_t> per_bin(10, 0);
  for (const auto& row : coordinator.task_trace("t1")) {
    if (row.event == TraceEvent::Dispatch) {
      const std::size_t bin = static_cast<std::size_t>((row.t - 1000) / 1000);
      REQUIRE(bin < 10);
      per_bin[bin] += row.count;
    }
  }
  for (auto c : per_bin) CHECK(c == 5);
}
