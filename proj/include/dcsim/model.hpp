#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcsim/common.hpp"
#include "dcsim/rate_function.hpp"

namespace dcsim {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Grades and demand

// Resource and timing parameters of one device capability class. Grade labels
// are free-form; "High"/"Low" are conventions, not keywords.
struct GradeSpec {
  std::string grade_id;
  std::int64_t k = 1;       // resource bundles needed to simulate one device
  std::int64_t f = 0;       // bundles available in logical simulation
  std::int64_t m = 0;       // physical phones available
  DurationMs alpha = 1000;  // per-device completion time, logical
  DurationMs beta = 1000;   // per-device completion time, phone
  DurationMs lambda = 0;    // one-time compute-framework startup on phones

  bool operator==(const GradeSpec&) const = default;
};

struct GradeDemand {
  std::string grade_id;
  std::int64_t devices = 0;       // N: total devices to simulate
  std::int64_t benchmarking = 0;  // q: phones reserved for performance measurement

  bool operator==(const GradeDemand&) const = default;
};

struct SimulationDemand {
  std::vector<GradeDemand> per_grade;

  bool operator==(const SimulationDemand&) const = default;

  const GradeDemand* find(const std::string& grade_id) const {
    for (const auto& g : per_grade)
      if (g.grade_id == grade_id) return &g;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Operator flow

struct PartitionSpec {
  enum class Kind { Iid, Skewed };
  Kind kind = Kind::Iid;
  double high_pos_fraction_clients = 0.7;
  double pos_fraction_high = 0.8;
  double pos_fraction_low = 0.2;

  bool operator==(const PartitionSpec&) const = default;
};

struct OperatorStep {
  enum class Kind { TrainLr, PredictLr, CustomSleep };
  Kind kind = Kind::CustomSleep;
  std::string dataset_ref;  // empty only for custom_sleep
  std::string schema_ref;   // CSV ingestion schema, when dataset_ref is a file
  std::int64_t epochs = 10;
  double learning_rate = 1e-3;
  DurationMs sleep = 0;
  PartitionSpec partition;

  bool operator==(const OperatorStep&) const = default;
};

struct OperatorFlow {
  std::vector<OperatorStep> steps;

  bool operator==(const OperatorFlow&) const = default;
};

// ---------------------------------------------------------------------------
// Dispatch strategy (semantics live in deviceflow.hpp)

enum class TimeBase { RelativeToRoundEnd, Absolute };

struct DispatchPoint {
  DurationMs t = 0;  // offset per time_base
  std::int64_t count = 0;
  double p_fail = 0.0;
  std::int64_t discard = 0;

  bool operator==(const DispatchPoint&) const = default;
};

struct DispatchStrategySpec {
  enum class Kind { RealTimeAccumulated, TimePoint, TimeInterval };

  Kind kind = Kind::RealTimeAccumulated;
  std::int64_t capacity_per_sec = 700;

  // RealTimeAccumulated: cycle through thresholds until the task completes.
  std::vector<std::int64_t> thresholds{1};
  double p_fail = 0.0;  // also the per-interval failure probability for TimeInterval

  // TimePoint
  TimeBase time_base = TimeBase::RelativeToRoundEnd;
  std::vector<DispatchPoint> points;

  // TimeInterval
  RateFunctionSpec rate_fn;
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  DurationMs interval_start = 0;
  DurationMs interval_delta = 0;
  std::int64_t discard_per_interval = 0;

  bool operator==(const DispatchStrategySpec&) const = default;
};

// ---------------------------------------------------------------------------
// Aggregation trigger and response delay

struct AggregationTrigger {
  enum class Kind { SampleThreshold, Scheduled };
  Kind kind = Kind::SampleThreshold;
  std::int64_t samples = 1;   // SampleThreshold
  DurationMs period = 1000;   // Scheduled

  bool operator==(const AggregationTrigger&) const = default;
};

struct ResponseDelayModel {
  enum class Kind { None, Fixed, RightTailNormal };
  Kind kind = Kind::None;
  DurationMs fixed_delay = 0;
  double sigma = 1.0;        // delay = |N(0,1)| * sigma * scale
  DurationMs scale = 1000;
  bool ctr_linked = false;   // smaller delays go to higher-CTR clients

  bool operator==(const ResponseDelayModel&) const = default;
};

// ---------------------------------------------------------------------------
// Task specification

struct TaskSpec {
  std::string task_id;
  std::int64_t priority = 0;
  std::int64_t rounds = 1;
  std::uint64_t seed = 0;
  std::vector<GradeSpec> grades;
  SimulationDemand demand;
  OperatorFlow operator_flow;
  DispatchStrategySpec dispatch_strategy;
  AggregationTrigger aggregation_trigger;
  ResponseDelayModel response_delay;
  std::map<std::string, std::int64_t> allocation_override;  // grade_id -> x
  bool has_allocation_override = false;

  bool operator==(const TaskSpec&) const = default;

  const GradeSpec* find_grade(const std::string& grade_id) const {
    for (const auto& g : grades)
      if (g.grade_id == grade_id) return &g;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Resource pool (data type shared with the scheduler)

struct PoolEntry {
  std::int64_t bundles_total = 0;
  std::int64_t bundles_free = 0;
  std::int64_t phones_total = 0;
  std::int64_t phones_free = 0;
};

struct ResourcePool {
  std::map<std::string, PoolEntry> grades;

  static ResourcePool from_totals(const std::vector<std::tuple<std::string, std::int64_t, std::int64_t>>& totals) {
    ResourcePool pool;
    for (const auto& [id, bundles, phones] : totals) {
      pool.grades[id] = PoolEntry{bundles, bundles, phones, phones};
    }
    return pool;
  }

  // A pool sized exactly to a task's declared per-grade resources.
  static ResourcePool for_task(const TaskSpec& spec) {
    ResourcePool pool;
    for (const auto& g : spec.grades) pool.grades[g.grade_id] = PoolEntry{g.f, g.f, g.m, g.m};
    return pool;
  }

  const PoolEntry* find(const std::string& grade_id) const {
    auto it = grades.find(grade_id);
    return it == grades.end() ? nullptr : &it->second;
  }
};

// ---------------------------------------------------------------------------
// Synthetic dataset references: "synthetic:rows=4000,dim=256,test=1000"

struct SyntheticRef {
  std::int64_t rows = 1000;
  std::int64_t dim = 1024;
  std::int64_t test_rows = 0;
};

inline bool is_synthetic_ref(const std::string& ref) { return ref.rfind("synthetic:", 0) == 0; }

inline SyntheticRef parse_synthetic_ref(const std::string& ref) {
  if (!is_synthetic_ref(ref)) throw Error("not a synthetic dataset ref: " + ref);
  SyntheticRef out;
  std::string body = ref.substr(10);
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t comma = body.find(',', pos);
    if (comma == std::string::npos) comma = body.size();
    std::string kv = body.substr(pos, comma - pos);
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw Error("malformed synthetic ref entry '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::int64_t value = 0;
    try {
      value = std::stoll(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error("malformed synthetic ref value in '" + kv + "'");
    }
    if (key == "rows") out.rows = value;
    else if (key == "dim") out.dim = value;
    else if (key == "test") out.test_rows = value;
    else throw Error("unknown synthetic ref key '" + key + "'");
    pos = comma + 1;
  }
  if (out.rows < 1 || out.dim < 1 || out.test_rows < 0)
    throw Error("synthetic ref out of range: " + ref);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing helpers (strict: unknown keys are an error)

namespace detail {

inline void require_keys(const json& j, const std::string& context,
                         const std::set<std::string>& allowed,
                         const std::set<std::string>& required) {
  if (!j.is_object()) throw ParseError(context + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ParseError(context + ": unknown field '" + key + "'");
  }
  for (const auto& key : required) {
    if (!j.contains(key)) throw ParseError(context + ": missing required field '" + key + "'");
  }
}

inline std::int64_t get_int(const json& j, const std::string& context, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer())
    throw ParseError(context + ": field '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline std::int64_t get_int_or(const json& j, const std::string& context, const std::string& key,
                               std::int64_t fallback) {
  return j.contains(key) ? get_int(j, context, key) : fallback;
}

inline double get_number(const json& j, const std::string& context, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ParseError(context + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline double get_number_or(const json& j, const std::string& context, const std::string& key,
                            double fallback) {
  return j.contains(key) ? get_number(j, context, key) : fallback;
}

inline std::string get_string(const json& j, const std::string& context, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ParseError(context + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline double get_probability(const json& j, const std::string& context, const std::string& key,
                              double fallback) {
  double p = get_number_or(j, context, key, fallback);
  if (p < 0.0 || p > 1.0) throw ParseError(context + ": '" + key + "' must lie in [0,1]");
  return p;
}

inline RateFunctionSpec parse_rate_fn(const json& j, const std::string& context) {
  require_keys(j, context, {"segments"}, {"segments"});
  if (!j.at("segments").is_array() || j.at("segments").empty())
    throw ParseError(context + ": 'segments' must be a nonempty array");
  RateFunctionSpec fn;
  int idx = 0;
  for (const auto& sj : j.at("segments")) {
    const std::string sctx = context + ".segments[" + std::to_string(idx++) + "]";
    require_keys(sj, sctx, {"kind", "domain", "mu", "sigma", "base", "value", "coeffs"},
                 {"kind", "domain"});
    RateSegment seg;
    const std::string kind = get_string(sj, sctx, "kind");
    if (kind == "normal_pdf") seg.kind = RateSegment::Kind::NormalPdf;
    else if (kind == "sin_plus_1") seg.kind = RateSegment::Kind::SinPlusOne;
    else if (kind == "cos_plus_1") seg.kind = RateSegment::Kind::CosPlusOne;
    else if (kind == "exp_base") seg.kind = RateSegment::Kind::ExpBase;
    else if (kind == "constant") seg.kind = RateSegment::Kind::Constant;
    else if (kind == "polynomial") seg.kind = RateSegment::Kind::Polynomial;
    else throw ParseError(sctx + ": unknown rate function kind '" + kind + "'");
    const auto& dom = sj.at("domain");
    if (!dom.is_array() || dom.size() != 2 || !dom[0].is_number() || !dom[1].is_number())
      throw ParseError(sctx + ": 'domain' must be [lo, hi]");
    seg.lo = dom[0].get<double>();
    seg.hi = dom[1].get<double>();
    seg.mu = get_number_or(sj, sctx, "mu", 0.0);
    seg.sigma = get_number_or(sj, sctx, "sigma", 1.0);
    seg.base = get_number_or(sj, sctx, "base", 2.0);
    seg.value = get_number_or(sj, sctx, "value", 1.0);
    if (sj.contains("coeffs")) {
      for (const auto& c : sj.at("coeffs")) {
        if (!c.is_number()) throw ParseError(sctx + ": 'coeffs' must be numbers");
        seg.coeffs.push_back(c.get<double>());
      }
    }
    fn.segments.push_back(std::move(seg));
  }
  return fn;
}

inline DispatchStrategySpec parse_dispatch_strategy(const json& j) {
  const std::string ctx = "dispatch_strategy";
  DispatchStrategySpec out;
  if (!j.is_object()) throw ParseError(ctx + ": expected an object");
  const std::string type = get_string(j, ctx, "type");
  out.capacity_per_sec = get_int_or(j, ctx, "capacity_per_sec", 700);
  if (out.capacity_per_sec < 1) throw ParseError(ctx + ": capacity_per_sec must be >= 1");
  if (out.capacity_per_sec > 1000000)
    throw ParseError(ctx + ": capacity_per_sec above 1e6 is not supported");
  if (type == "realtime_accumulated") {
    require_keys(j, ctx, {"type", "thresholds", "p_fail", "capacity_per_sec"}, {"type"});
    out.kind = DispatchStrategySpec::Kind::RealTimeAccumulated;
    if (j.contains("thresholds")) {
      out.thresholds.clear();
      for (const auto& t : j.at("thresholds")) {
        if (!t.is_number_integer() || t.get<std::int64_t>() < 1)
          throw ParseError(ctx + ": thresholds must be positive integers");
        out.thresholds.push_back(t.get<std::int64_t>());
      }
      if (out.thresholds.empty()) throw ParseError(ctx + ": thresholds must be nonempty");
    }
    out.p_fail = get_probability(j, ctx, "p_fail", 0.0);
  } else if (type == "time_point") {
    require_keys(j, ctx, {"type", "time_base", "points", "capacity_per_sec"}, {"type", "points"});
    out.kind = DispatchStrategySpec::Kind::TimePoint;
    const std::string base = j.contains("time_base") ? get_string(j, ctx, "time_base") : "relative";
    if (base == "relative") out.time_base = TimeBase::RelativeToRoundEnd;
    else if (base == "absolute") out.time_base = TimeBase::Absolute;
    else throw ParseError(ctx + ": time_base must be 'relative' or 'absolute'");
    int idx = 0;
    for (const auto& pj : j.at("points")) {
      const std::string pctx = ctx + ".points[" + std::to_string(idx++) + "]";
      require_keys(pj, pctx, {"t_s", "count", "p_fail", "discard"}, {"t_s", "count"});
      DispatchPoint p;
      p.t = seconds_to_ms(get_number(pj, pctx, "t_s"));
      p.count = get_int(pj, pctx, "count");
      if (p.count < 0) throw ParseError(pctx + ": count must be >= 0");
      p.p_fail = get_probability(pj, pctx, "p_fail", 0.0);
      p.discard = get_int_or(pj, pctx, "discard", 0);
      if (p.discard < 0) throw ParseError(pctx + ": discard must be >= 0");
      out.points.push_back(p);
    }
  } else if (type == "time_interval") {
    require_keys(j, ctx,
                 {"type", "time_base", "rate_fn", "domain", "interval", "p_fail",
                  "discard_per_interval", "capacity_per_sec"},
                 {"type", "rate_fn", "interval"});
    out.kind = DispatchStrategySpec::Kind::TimeInterval;
    const std::string base = j.contains("time_base") ? get_string(j, ctx, "time_base") : "relative";
    if (base == "relative") out.time_base = TimeBase::RelativeToRoundEnd;
    else if (base == "absolute") out.time_base = TimeBase::Absolute;
    else throw ParseError(ctx + ": time_base must be 'relative' or 'absolute'");
    out.rate_fn = parse_rate_fn(j.at("rate_fn"), ctx + ".rate_fn");
    if (j.contains("domain")) {
      const auto& dom = j.at("domain");
      if (!dom.is_array() || dom.size() != 2 || !dom[0].is_number() || !dom[1].is_number())
        throw ParseError(ctx + ": 'domain' must be [lo, hi]");
      out.domain_lo = dom[0].get<double>();
      out.domain_hi = dom[1].get<double>();
    } else {
      out.domain_lo = out.rate_fn.domain_lo();
      out.domain_hi = out.rate_fn.domain_hi();
    }
    if (!(out.domain_lo < out.domain_hi)) throw ParseError(ctx + ": domain must satisfy a < b");
    const auto& ij = j.at("interval");
    require_keys(ij, ctx + ".interval", {"start_s", "delta_s"}, {"delta_s"});
    out.interval_start = seconds_to_ms(get_number_or(ij, ctx + ".interval", "start_s", 0.0));
    out.interval_delta = seconds_to_ms(get_number(ij, ctx + ".interval", "delta_s"));
    if (out.interval_delta <= 0) throw ParseError(ctx + ": interval delta must be positive");
    out.p_fail = get_probability(j, ctx, "p_fail", 0.0);
    out.discard_per_interval = get_int_or(j, ctx, "discard_per_interval", 0);
    if (out.discard_per_interval < 0)
      throw ParseError(ctx + ": discard_per_interval must be >= 0");
    out.rate_fn.validate();
  } else {
    throw ParseError(ctx + ": unknown type '" + type + "'");
  }
  return out;
}

inline AggregationTrigger parse_trigger(const json& j) {
  const std::string ctx = "aggregation_trigger";
  AggregationTrigger out;
  const std::string type = get_string(j, ctx, "type");
  if (type == "sample_threshold") {
    require_keys(j, ctx, {"type", "samples"}, {"type", "samples"});
    out.kind = AggregationTrigger::Kind::SampleThreshold;
    out.samples = get_int(j, ctx, "samples");
    if (out.samples < 1) throw ParseError(ctx + ": samples must be >= 1");
  } else if (type == "scheduled") {
    require_keys(j, ctx, {"type", "period_s"}, {"type", "period_s"});
    out.kind = AggregationTrigger::Kind::Scheduled;
    out.period = seconds_to_ms(get_number(j, ctx, "period_s"));
    if (out.period <= 0) throw ParseError(ctx + ": period must be positive");
  } else {
    throw ParseError(ctx + ": unknown type '" + type + "'");
  }
  return out;
}

inline ResponseDelayModel parse_response_delay(const json& j) {
  const std::string ctx = "response_delay";
  ResponseDelayModel out;
  const std::string type = get_string(j, ctx, "type");
  if (type == "none") {
    require_keys(j, ctx, {"type"}, {"type"});
    out.kind = ResponseDelayModel::Kind::None;
  } else if (type == "fixed") {
    require_keys(j, ctx, {"type", "delay_s"}, {"type", "delay_s"});
    out.kind = ResponseDelayModel::Kind::Fixed;
    out.fixed_delay = seconds_to_ms(get_number(j, ctx, "delay_s"));
    if (out.fixed_delay < 0) throw ParseError(ctx + ": delay must be >= 0");
  } else if (type == "right_tail_normal") {
    require_keys(j, ctx, {"type", "sigma", "scale_s", "ctr_linked"}, {"type", "sigma"});
    out.kind = ResponseDelayModel::Kind::RightTailNormal;
    out.sigma = get_number(j, ctx, "sigma");
    if (out.sigma <= 0.0) throw ParseError(ctx + ": sigma must be positive");
    out.scale = seconds_to_ms(get_number_or(j, ctx, "scale_s", 1.0));
    if (out.scale < 0) throw ParseError(ctx + ": scale must be >= 0");
    out.ctr_linked = j.contains("ctr_linked") ? j.at("ctr_linked").get<bool>() : false;
  } else {
    throw ParseError(ctx + ": unknown type '" + type + "'");
  }
  return out;
}

inline PartitionSpec parse_partition(const json& j) {
  const std::string ctx = "partition";
  PartitionSpec out;
  const std::string type = get_string(j, ctx, "type");
  if (type == "iid") {
    require_keys(j, ctx, {"type"}, {"type"});
    out.kind = PartitionSpec::Kind::Iid;
  } else if (type == "skewed") {
    require_keys(j, ctx, {"type", "high_clients", "pos_high", "pos_low"}, {"type"});
    out.kind = PartitionSpec::Kind::Skewed;
    out.high_pos_fraction_clients = get_probability(j, ctx, "high_clients", 0.7);
    out.pos_fraction_high = get_probability(j, ctx, "pos_high", 0.8);
    out.pos_fraction_low = get_probability(j, ctx, "pos_low", 0.2);
  } else {
    throw ParseError(ctx + ": unknown type '" + type + "'");
  }
  return out;
}

inline OperatorStep parse_step(const json& j, int index) {
  const std::string ctx = "operator_flow[" + std::to_string(index) + "]";
  OperatorStep out;
  const std::string kind = get_string(j, ctx, "kind");
  if (kind == "train_lr") {
    require_keys(j, ctx,
                 {"kind", "dataset_ref", "schema_ref", "epochs", "learning_rate", "partition"},
                 {"kind", "dataset_ref"});
    out.kind = OperatorStep::Kind::TrainLr;
    out.dataset_ref = get_string(j, ctx, "dataset_ref");
    out.schema_ref = j.contains("schema_ref") ? get_string(j, ctx, "schema_ref") : "";
    out.epochs = get_int_or(j, ctx, "epochs", 10);
    if (out.epochs < 1) throw ParseError(ctx + ": epochs must be >= 1");
    out.learning_rate = get_number_or(j, ctx, "learning_rate", 1e-3);
    if (out.learning_rate < 0.0) throw ParseError(ctx + ": learning_rate must be >= 0");
    if (j.contains("partition")) out.partition = parse_partition(j.at("partition"));
  } else if (kind == "predict_lr") {
    require_keys(j, ctx, {"kind", "dataset_ref", "schema_ref"}, {"kind", "dataset_ref"});
    out.kind = OperatorStep::Kind::PredictLr;
    out.dataset_ref = get_string(j, ctx, "dataset_ref");
    out.schema_ref = j.contains("schema_ref") ? get_string(j, ctx, "schema_ref") : "";
  } else if (kind == "custom_sleep") {
    require_keys(j, ctx, {"kind", "sleep_s"}, {"kind", "sleep_s"});
    out.kind = OperatorStep::Kind::CustomSleep;
    out.sleep = seconds_to_ms(get_number(j, ctx, "sleep_s"));
    if (out.sleep < 0) throw ParseError(ctx + ": sleep must be >= 0");
  } else {
    throw ParseError(ctx + ": unknown operator kind '" + kind + "'");
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// parse / serialize

inline TaskSpec parse_task_spec(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  using namespace detail;
  const std::string ctx = "task";
  require_keys(doc, ctx,
               {"task_id", "priority", "rounds", "seed", "grades", "operator_flow",
                "dispatch_strategy", "aggregation_trigger", "response_delay",
                "allocation_override"},
               {"task_id", "rounds", "grades", "operator_flow"});

  TaskSpec spec;
  spec.task_id = get_string(doc, ctx, "task_id");
  if (spec.task_id.empty()) throw ParseError("task_id must be nonempty");
  spec.priority = get_int_or(doc, ctx, "priority", 0);
  spec.rounds = get_int(doc, ctx, "rounds");
  if (spec.rounds < 1) throw ParseError("rounds must be >= 1");
  if (doc.contains("seed")) {
    const auto& s = doc.at("seed");
    if (!s.is_number_unsigned() && !s.is_number_integer())
      throw ParseError("seed must be an integer");
    spec.seed = s.get<std::uint64_t>();
  }

  if (!doc.at("grades").is_array() || doc.at("grades").empty())
    throw ParseError("'grades' must be a nonempty array");
  int gi = 0;
  for (const auto& gj : doc.at("grades")) {
    const std::string gctx = "grades[" + std::to_string(gi++) + "]";
    require_keys(gj, gctx,
                 {"grade_id", "k", "f", "m", "alpha_s", "beta_s", "lambda_s", "N", "q"},
                 {"grade_id", "k", "f", "m", "alpha_s", "beta_s", "lambda_s", "N", "q"});
    GradeSpec g;
    g.grade_id = get_string(gj, gctx, "grade_id");
    g.k = get_int(gj, gctx, "k");
    g.f = get_int(gj, gctx, "f");
    g.m = get_int(gj, gctx, "m");
    g.alpha = seconds_to_ms(get_number(gj, gctx, "alpha_s"));
    g.beta = seconds_to_ms(get_number(gj, gctx, "beta_s"));
    g.lambda = seconds_to_ms(get_number(gj, gctx, "lambda_s"));
    if (g.k < 1) throw ParseError(gctx + ": k must be >= 1");
    if (g.f < 0 || g.m < 0) throw ParseError(gctx + ": f and m must be >= 0");
    if (g.alpha <= 0) throw ParseError(gctx + ": alpha must be positive");
    if (g.beta <= 0) throw ParseError(gctx + ": beta must be positive");
    if (g.lambda < 0) throw ParseError(gctx + ": lambda must be >= 0");
    if (spec.find_grade(g.grade_id)) throw ParseError(gctx + ": duplicate grade_id");

    GradeDemand d;
    d.grade_id = g.grade_id;
    d.devices = get_int(gj, gctx, "N");
    d.benchmarking = get_int(gj, gctx, "q");
    if (d.devices < 0 || d.benchmarking < 0) throw ParseError(gctx + ": N and q must be >= 0");
    if (d.benchmarking > d.devices)
      throw ParseError(gctx + ": benchmarking exceeds demand (q > N)");
    if (d.benchmarking > g.m)
      throw ParseError(gctx + ": benchmarking exceeds phones (q > m)");

    spec.grades.push_back(std::move(g));
    spec.demand.per_grade.push_back(std::move(d));
  }

  if (!doc.at("operator_flow").is_array() || doc.at("operator_flow").empty())
    throw ParseError("'operator_flow' must be a nonempty array");
  int si = 0;
  for (const auto& sj : doc.at("operator_flow"))
    spec.operator_flow.steps.push_back(detail::parse_step(sj, si++));

  if (doc.contains("dispatch_strategy"))
    spec.dispatch_strategy = detail::parse_dispatch_strategy(doc.at("dispatch_strategy"));
  if (doc.contains("aggregation_trigger"))
    spec.aggregation_trigger = detail::parse_trigger(doc.at("aggregation_trigger"));
  if (doc.contains("response_delay"))
    spec.response_delay = detail::parse_response_delay(doc.at("response_delay"));

  if (doc.contains("allocation_override")) {
    const auto& ov = doc.at("allocation_override");
    if (!ov.is_object()) throw ParseError("allocation_override must map grade_id to x");
    spec.has_allocation_override = true;
    for (const auto& [key, value] : ov.items()) {
      if (!spec.find_grade(key))
        throw ParseError("allocation_override references unknown grade '" + key + "'");
      if (!value.is_number_integer() || value.get<std::int64_t>() < 0)
        throw ParseError("allocation_override['" + key + "'] must be a nonnegative integer");
      spec.allocation_override[key] = value.get<std::int64_t>();
    }
  }
  return spec;
}

namespace detail {

inline json rate_fn_to_json(const RateFunctionSpec& fn) {
  json segs = json::array();
  for (const auto& s : fn.segments) {
    json sj;
    switch (s.kind) {
      case RateSegment::Kind::NormalPdf:
        sj["kind"] = "normal_pdf";
        break;
      case RateSegment::Kind::SinPlusOne:
        sj["kind"] = "sin_plus_1";
        break;
      case RateSegment::Kind::CosPlusOne:
        sj["kind"] = "cos_plus_1";
        break;
      case RateSegment::Kind::ExpBase:
        sj["kind"] = "exp_base";
        break;
      case RateSegment::Kind::Constant:
        sj["kind"] = "constant";
        break;
      case RateSegment::Kind::Polynomial:
        sj["kind"] = "polynomial";
        break;
    }
    sj["domain"] = {s.lo, s.hi};
    if (s.kind == RateSegment::Kind::NormalPdf) {
      sj["mu"] = s.mu;
      sj["sigma"] = s.sigma;
    }
    if (s.kind == RateSegment::Kind::ExpBase) sj["base"] = s.base;
    if (s.kind == RateSegment::Kind::Constant) sj["value"] = s.value;
    if (s.kind == RateSegment::Kind::Polynomial) sj["coeffs"] = s.coeffs;
    segs.push_back(std::move(sj));
  }
  json out;
  out["segments"] = std::move(segs);
  return out;
}

}  // namespace detail

inline json task_spec_to_json(const TaskSpec& spec) {
  json doc;
  doc["task_id"] = spec.task_id;
  doc["priority"] = spec.priority;
  doc["rounds"] = spec.rounds;
  doc["seed"] = spec.seed;

  json grades = json::array();
  for (std::size_t i = 0; i < spec.grades.size(); ++i) {
    const auto& g = spec.grades[i];
    const auto& d = spec.demand.per_grade[i];
    json gj;
    gj["grade_id"] = g.grade_id;
    gj["k"] = g.k;
    gj["f"] = g.f;
    gj["m"] = g.m;
    gj["alpha_s"] = ms_to_seconds(g.alpha);
    gj["beta_s"] = ms_to_seconds(g.beta);
    gj["lambda_s"] = ms_to_seconds(g.lambda);
    gj["N"] = d.devices;
    gj["q"] = d.benchmarking;
    grades.push_back(std::move(gj));
  }
  doc["grades"] = std::move(grades);

  json steps = json::array();
  for (const auto& s : spec.operator_flow.steps) {
    json sj;
    switch (s.kind) {
      case OperatorStep::Kind::TrainLr: {
        sj["kind"] = "train_lr";
        sj["dataset_ref"] = s.dataset_ref;
        if (!s.schema_ref.empty()) sj["schema_ref"] = s.schema_ref;
        sj["epochs"] = s.epochs;
        sj["learning_rate"] = s.learning_rate;
        json pj;
        if (s.partition.kind == PartitionSpec::Kind::Iid) {
          pj["type"] = "iid";
        } else {
          pj["type"] = "skewed";
          pj["high_clients"] = s.partition.high_pos_fraction_clients;
          pj["pos_high"] = s.partition.pos_fraction_high;
          pj["pos_low"] = s.partition.pos_fraction_low;
        }
        sj["partition"] = std::move(pj);
        break;
      }
      case OperatorStep::Kind::PredictLr:
        sj["kind"] = "predict_lr";
        sj["dataset_ref"] = s.dataset_ref;
        if (!s.schema_ref.empty()) sj["schema_ref"] = s.schema_ref;
        break;
      case OperatorStep::Kind::CustomSleep:
        sj["kind"] = "custom_sleep";
        sj["sleep_s"] = ms_to_seconds(s.sleep);
        break;
    }
    steps.push_back(std::move(sj));
  }
  doc["operator_flow"] = std::move(steps);

  {
    const auto& ds = spec.dispatch_strategy;
    json dj;
    switch (ds.kind) {
      case DispatchStrategySpec::Kind::RealTimeAccumulated:
        dj["type"] = "realtime_accumulated";
        dj["thresholds"] = ds.thresholds;
        dj["p_fail"] = ds.p_fail;
        break;
      case DispatchStrategySpec::Kind::TimePoint: {
        dj["type"] = "time_point";
        dj["time_base"] = ds.time_base == TimeBase::Absolute ? "absolute" : "relative";
        json points = json::array();
        for (const auto& p : ds.points) {
          json pj;
          pj["t_s"] = ms_to_seconds(p.t);
          pj["count"] = p.count;
          pj["p_fail"] = p.p_fail;
          pj["discard"] = p.discard;
          points.push_back(std::move(pj));
        }
        dj["points"] = std::move(points);
        break;
      }
      case DispatchStrategySpec::Kind::TimeInterval:
        dj["type"] = "time_interval";
        dj["time_base"] = ds.time_base == TimeBase::Absolute ? "absolute" : "relative";
        dj["rate_fn"] = detail::rate_fn_to_json(ds.rate_fn);
        dj["domain"] = {ds.domain_lo, ds.domain_hi};
        dj["interval"] = {{"start_s", ms_to_seconds(ds.interval_start)},
                          {"delta_s", ms_to_seconds(ds.interval_delta)}};
        dj["p_fail"] = ds.p_fail;
        dj["discard_per_interval"] = ds.discard_per_interval;
        break;
    }
    dj["capacity_per_sec"] = ds.capacity_per_sec;
    doc["dispatch_strategy"] = std::move(dj);
  }

  {
    json tj;
    if (spec.aggregation_trigger.kind == AggregationTrigger::Kind::SampleThreshold) {
      tj["type"] = "sample_threshold";
      tj["samples"] = spec.aggregation_trigger.samples;
    } else {
      tj["type"] = "scheduled";
      tj["period_s"] = ms_to_seconds(spec.aggregation_trigger.period);
    }
    doc["aggregation_trigger"] = std::move(tj);
  }

  {
    json rj;
    switch (spec.response_delay.kind) {
      case ResponseDelayModel::Kind::None:
        rj["type"] = "none";
        break;
      case ResponseDelayModel::Kind::Fixed:
        rj["type"] = "fixed";
        rj["delay_s"] = ms_to_seconds(spec.response_delay.fixed_delay);
        break;
      case ResponseDelayModel::Kind::RightTailNormal:
        rj["type"] = "right_tail_normal";
        rj["sigma"] = spec.response_delay.sigma;
        rj["scale_s"] = ms_to_seconds(spec.response_delay.scale);
        rj["ctr_linked"] = spec.response_delay.ctr_linked;
        break;
    }
    doc["response_delay"] = std::move(rj);
  }

  if (spec.has_allocation_override) {
    json ov;
    for (const auto& [grade, x] : spec.allocation_override) ov[grade] = x;
    doc["allocation_override"] = std::move(ov);
  }
  return doc;
}

inline std::string serialize_task_spec(const TaskSpec& spec) {
  return task_spec_to_json(spec).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Validation (pure: never mutates spec or pool)

inline bool dataset_ref_resolves(const std::string& ref) {
  if (is_synthetic_ref(ref)) {
    try {
      parse_synthetic_ref(ref);
      return true;
    } catch (const Error&) {
      return false;
    }
  }
  return std::filesystem::exists(ref);
}

inline std::vector<std::string> validate_task_spec(const TaskSpec& spec, const ResourcePool& pool) {
  std::vector<std::string> violations;
  auto add = [&](const std::string& v) { violations.push_back(v); };

  if (spec.task_id.empty()) add("task_id empty");
  if (spec.rounds < 1) add("rounds must be >= 1");
  if (spec.grades.size() != spec.demand.per_grade.size()) add("grades/demand size mismatch");

  for (std::size_t i = 0; i < spec.grades.size() && i < spec.demand.per_grade.size(); ++i) {
    const auto& g = spec.grades[i];
    const auto& d = spec.demand.per_grade[i];
    if (g.k < 1) add("grade " + g.grade_id + ": k must be >= 1");
    if (g.f < 0 || g.m < 0) add("grade " + g.grade_id + ": f and m must be >= 0");
    if (g.alpha <= 0) add("grade " + g.grade_id + ": alpha must be positive");
    if (g.beta <= 0) add("grade " + g.grade_id + ": beta must be positive");
    if (g.lambda < 0) add("grade " + g.grade_id + ": lambda must be >= 0");
    if (d.benchmarking > d.devices) add("grade " + g.grade_id + ": benchmarking exceeds demand");
    if (d.benchmarking > g.m) add("grade " + g.grade_id + ": benchmarking exceeds phones");
    if (d.devices - d.benchmarking > 0 && g.f < g.k && g.m < 1)
      add("grade " + g.grade_id + " unhostable");
    if (d.devices > 0 && !pool.find(g.grade_id))
      add("grade " + g.grade_id + " not present in resource pool");
  }

  for (const auto& step : spec.operator_flow.steps) {
    if (step.kind == OperatorStep::Kind::CustomSleep) continue;
    if (step.dataset_ref.empty()) {
      add("unresolved dataset: (empty ref)");
    } else if (!dataset_ref_resolves(step.dataset_ref)) {
      add("unresolved dataset: " + step.dataset_ref);
    }
    if (!step.schema_ref.empty() && !std::filesystem::exists(step.schema_ref))
      add("unresolved schema: " + step.schema_ref);
  }
  if (spec.operator_flow.steps.empty()) add("operator_flow must have at least one step");

  {
    const auto& ds = spec.dispatch_strategy;
    if (ds.capacity_per_sec < 1) add("dispatch capacity must be >= 1");
    auto check_probability = [&](double p, const char* what) {
      if (p < 0.0 || p > 1.0) add(std::string(what) + " must lie in [0,1]");
    };
    switch (ds.kind) {
      case DispatchStrategySpec::Kind::RealTimeAccumulated:
        if (ds.thresholds.empty()) add("thresholds must be nonempty");
        for (auto t : ds.thresholds)
          if (t < 1) add("thresholds must be >= 1");
        check_probability(ds.p_fail, "p_fail");
        break;
      case DispatchStrategySpec::Kind::TimePoint:
        for (const auto& p : ds.points) {
          if (p.count < 0 || p.discard < 0) add("dispatch point counts must be >= 0");
          check_probability(p.p_fail, "point p_fail");
        }
        break;
      case DispatchStrategySpec::Kind::TimeInterval:
        if (ds.interval_delta <= 0) add("dispatch interval delta must be positive");
        if (!(ds.domain_lo < ds.domain_hi)) add("rate function domain must satisfy a < b");
        if (ds.discard_per_interval < 0) add("discard_per_interval must be >= 0");
        check_probability(ds.p_fail, "p_fail");
        try {
          ds.rate_fn.validate();
        } catch (const Error& e) {
          add(e.what());
        }
        break;
    }
  }
  if (spec.aggregation_trigger.kind == AggregationTrigger::Kind::SampleThreshold &&
      spec.aggregation_trigger.samples < 1)
    add("aggregation sample threshold must be >= 1");
  if (spec.aggregation_trigger.kind == AggregationTrigger::Kind::Scheduled &&
      spec.aggregation_trigger.period <= 0)
    add("aggregation period must be positive");
  if (spec.response_delay.kind == ResponseDelayModel::Kind::RightTailNormal &&
      spec.response_delay.sigma <= 0.0)
    add("response delay sigma must be positive");

  if (spec.has_allocation_override) {
    for (const auto& [grade, x] : spec.allocation_override) {
      const GradeDemand* d = spec.demand.find(grade);
      if (!d) {
        add("allocation_override references unknown grade " + grade);
        continue;
      }
      if (x < 0) add("allocation_override for grade " + grade + " must be >= 0");
      if (x > d->devices - d->benchmarking)
        add("allocation_override for grade " + grade + " exceeds N - q");
    }
  }
  return violations;
}

// ---------------------------------------------------------------------------
// Pool file I/O

inline ResourcePool parse_pool(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("pool: syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  detail::require_keys(doc, "pool", {"grades"}, {"grades"});
  ResourcePool pool;
  int gi = 0;
  for (const auto& gj : doc.at("grades")) {
    const std::string ctx = "pool.grades[" + std::to_string(gi++) + "]";
    detail::require_keys(gj, ctx, {"grade_id", "bundles", "phones"},
                         {"grade_id", "bundles", "phones"});
    const std::string id = detail::get_string(gj, ctx, "grade_id");
    const std::int64_t bundles = detail::get_int(gj, ctx, "bundles");
    const std::int64_t phones = detail::get_int(gj, ctx, "phones");
    if (bundles < 0 || phones < 0) throw ParseError(ctx + ": totals must be >= 0");
    if (pool.grades.count(id)) throw ParseError(ctx + ": duplicate grade_id");
    pool.grades[id] = PoolEntry{bundles, bundles, phones, phones};
  }
  return pool;
}

}  // namespace dcsim
