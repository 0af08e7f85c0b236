#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcsim/common.hpp"
#include "dcsim/fl.hpp"
#include "dcsim/model.hpp"
#include "dcsim/rng.hpp"
#include "dcsim/trace.hpp"

namespace dcsim {

// ---------------------------------------------------------------------------
// Stage profiles for benchmarking phones

// Five-stage benchmarking profile: 1 no-APK baseline, 2 APK launch,
// 3 training, 4 post-training, 5 APK closure. Power/duration/communication
// defaults reproduce the measured High/Low phone table; the cpu/mem levels
// behind the sampled series are synthesized at plausible magnitudes.
struct StageProfile {
  struct Stage {
    double power_mAh = 0.0;
    DurationMs duration = 15000;
    double commu_kb = 0.0;
    double cpu_pct = 0.0;
    double mem_kb = 0.0;
  };
  std::array<Stage, 5> stages;
  double voltage_mV = 3850.0;

  DurationMs total_duration() const {
    DurationMs t = 0;
    for (const auto& s : stages) t += s.duration;
    return t;
  }

  // Mean current while a stage runs, derived from its energy and duration.
  double current_uA(int stage_index) const {
    const Stage& s = stages[stage_index];
    const double hours = static_cast<double>(s.duration) / 3600000.0;
    return s.power_mAh / hours * 1000.0;
  }

  static StageProfile high() {
    StageProfile p;
    p.stages[0] = {0.24, 15000, 0.0, 4.0, 52000.0};
    p.stages[1] = {0.51, 15000, 0.0, 28.0, 181000.0};
    p.stages[2] = {0.18, 16200, 33.10, 62.0, 264000.0};
    p.stages[3] = {0.37, 15000, 0.0, 21.0, 255000.0};
    p.stages[4] = {0.44, 15000, 0.0, 9.0, 88000.0};
    return p;
  }

  static StageProfile low() {
    StageProfile p;
    p.stages[0] = {1.71, 15000, 0.0, 7.0, 48000.0};
    p.stages[1] = {1.80, 15000, 0.0, 41.0, 166000.0};
    p.stages[2] = {0.66, 21600, 33.10, 88.0, 241000.0};
    p.stages[3] = {1.65, 15000, 0.0, 33.0, 228000.0};
    p.stages[4] = {1.82, 15000, 0.0, 12.0, 74000.0};
    return p;
  }

  // The "Low" label selects the low-end profile; any other grade plays the
  // high-end one.
  static StageProfile for_grade(const std::string& grade_id) {
    return grade_id == "Low" ? low() : high();
  }
};

// ---------------------------------------------------------------------------
// Round timing

// Where one device's computation lands inside a round, before any response
// delay is added.
struct DeviceFinish {
  std::int64_t local_index = 0;   // index within the grade's logical or phone block
  DurationMs finish_offset = 0;   // relative to round start
};

// Devices spread round-robin across bundle slots; each slot simulates its
// share sequentially at alpha per device. With slots = floor(f / k) the last
// finish lands at ceil(x / slots) * alpha.
inline std::vector<DeviceFinish> logical_finish_offsets(std::int64_t x, std::int64_t slots,
                                                        DurationMs alpha) {
  if (x < 0) throw Error("logical_finish_offsets: negative device count");
  if (x > 0 && slots < 1) throw Error("no logical slots with work assigned");
  std::vector<DeviceFinish> out;
  out.reserve(static_cast<std::size_t>(x));
  for (std::int64_t i = 0; i < x; ++i) {
    const std::int64_t position = i / slots;  // sequential position in its slot
    out.push_back({i, (position + 1) * alpha});
  }
  return out;
}

// Phone-side: the framework startup lambda is charged once per phone per
// task, i.e. on the first participating round only; afterwards each phone
// works through its share sequentially at beta per device.
inline std::vector<DeviceFinish> phone_finish_offsets(std::int64_t n, std::int64_t phones,
                                                      DurationMs beta, DurationMs lambda,
                                                      bool first_round) {
  if (n < 0) throw Error("phone_finish_offsets: negative device count");
  if (n > 0 && phones < 1) throw Error("no phone capacity with work assigned");
  std::vector<DeviceFinish> out;
  out.reserve(static_cast<std::size_t>(n));
  const DurationMs startup = first_round ? lambda : 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t position = i / phones;
    out.push_back({i, startup + (position + 1) * beta});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Response delays

// Samples the per-device delay once per task. The right-tail variant draws
// |N(0,1)| and scales by sigma * scale, so a device's delay grows
// monotonically with sigma under the same seed.
inline DurationMs sample_response_delay(const ResponseDelayModel& model, RngStream& stream) {
  switch (model.kind) {
    case ResponseDelayModel::Kind::None:
      return 0;
    case ResponseDelayModel::Kind::Fixed:
      return model.fixed_delay;
    case ResponseDelayModel::Kind::RightTailNormal: {
      const double z = std::abs(stream.next_normal());
      return static_cast<DurationMs>(std::llround(z * model.sigma * static_cast<double>(model.scale)));
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Benchmarking metric playback

// Synthesizes the five-stage metric series for one benchmarking device:
// per-stage mean levels plus seeded noise at 5% amplitude, sampled at a fixed
// period while the device is active. Communication volume is spread across
// the training-stage samples.
inline void benchmark_metric_trace(MetricTrace& sink, const std::string& device_id,
                                   const std::string& grade_id, const StageProfile& profile,
                                   TimeMs round_start, DurationMs sample_period, RngStream& rng) {
  if (sample_period <= 0) throw Error("benchmark_metric_trace: sample period must be positive");
  TimeMs stage_start = round_start;
  for (int s = 0; s < 5; ++s) {
    const auto& stage = profile.stages[s];
    const TimeMs stage_end = stage_start + stage.duration;
    const std::int64_t sample_count = std::max<std::int64_t>(1, stage.duration / sample_period);
    const double bandwidth_per_sample =
        stage.commu_kb * 1024.0 / static_cast<double>(sample_count);
    std::int64_t emitted = 0;
    for (TimeMs t = stage_start; t < stage_end && emitted < sample_count; t += sample_period) {
      auto noisy = [&rng](double mean) { return mean * (1.0 + 0.05 * (2.0 * rng.next_double() - 1.0)); };
      MetricSample sample;
      sample.device_id = device_id;
      sample.grade = grade_id;
      sample.stage = s + 1;
      sample.t = t;
      sample.current_uA = noisy(profile.current_uA(s));
      sample.voltage_mV = noisy(profile.voltage_mV);
      sample.cpu_pct = noisy(stage.cpu_pct);
      sample.mem_kb = noisy(stage.mem_kb);
      sample.bandwidth_B = stage.commu_kb > 0.0 ? noisy(bandwidth_per_sample) : 0.0;
      sink.add(std::move(sample));
      ++emitted;
    }
    stage_start = stage_end;
  }
}

// ---------------------------------------------------------------------------
// Operator flow execution

struct DeviceContext {
  // Per flow step: this device's data partition for that step (null for
  // steps that carry no data, e.g. custom_sleep).
  std::vector<const fl::Dataset*> step_data;
  const fl::ModelParams* global = nullptr;  // current global model, if any

  const fl::Dataset* data_for(std::size_t step) const {
    return step < step_data.size() ? step_data[step] : nullptr;
  }
};

struct StepStat {
  OperatorStep::Kind kind = OperatorStep::Kind::CustomSleep;
  DurationMs duration = 0;  // virtual time the step itself contributes
  double value = 0.0;       // final loss (train) or mean prediction (predict)
};

struct FlowResult {
  std::optional<fl::ModelParams> payload;
  std::int64_t sample_count = 0;
  std::vector<StepStat> step_stats;

  DurationMs total_duration() const {
    DurationMs t = 0;
    for (const auto& s : step_stats) t += s.duration;
    return t;
  }
};

// Runs the steps in order. Training produces real numbers but is charged the
// grade's configured alpha/beta by the round timing, not its own runtime;
// only custom_sleep steps contribute extra reported duration.
inline FlowResult execute_operator_flow(const DeviceContext& ctx, const OperatorFlow& flow) {
  FlowResult out;
  std::optional<fl::ModelParams> working;
  for (std::size_t i = 0; i < flow.steps.size(); ++i) {
    const OperatorStep& step = flow.steps[i];
    const fl::Dataset* data = ctx.data_for(i);
    StepStat stat;
    stat.kind = step.kind;
    switch (step.kind) {
      case OperatorStep::Kind::TrainLr: {
        if (!data || data->rows.empty() || !ctx.global)
          throw Error("execute_operator_flow: train_lr without dataset or model");
        const fl::ModelParams& start = working ? *working : *ctx.global;
        fl::TrainResult result = fl::train_local_lr(start, *data, step.epochs, step.learning_rate);
        working = std::move(result.params);
        stat.value = result.final_loss;
        out.sample_count += static_cast<std::int64_t>(data->rows.size());
        break;
      }
      case OperatorStep::Kind::PredictLr: {
        if (!data || data->rows.empty() || !ctx.global)
          throw Error("execute_operator_flow: predict_lr without dataset or model");
        const fl::ModelParams& params = working ? *working : *ctx.global;
        double mean = 0.0;
        for (const auto& row : data->rows) mean += fl::predict(params, row);
        stat.value = mean / static_cast<double>(data->rows.size());
        break;
      }
      case OperatorStep::Kind::CustomSleep:
        stat.duration = step.sleep;
        break;
    }
    out.step_stats.push_back(stat);
  }
  out.payload = std::move(working);
  return out;
}

}  // namespace dcsim
