// Command-line front end: validate and run task specifications, solve
// allocations, audit finished runs, and generate synthetic CTR data.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcsim/dcsim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dcsim::Error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

dcsim::RunOutput resolve_out_dir(const std::string& cli_out) {
  dcsim::RunOutput out;
  if (const char* env = std::getenv("DCSIM_OUT"); env && *env) {
    out.out_dir = env;
    out.env_override = true;
  } else {
    out.out_dir = cli_out;
  }
  return out;
}

void print_plan(const dcsim::AllocationPlan& plan) {
  std::printf("%-12s %12s\n", "grade", "x_logical");
  for (std::size_t i = 0; i < plan.x.size(); ++i)
    std::printf("%-12s %12lld\n", plan.grade_ids[i].c_str(),
                static_cast<long long>(plan.x[i]));
  std::printf("T_l = %s s   T_p = %s s   T = %s s\n",
              dcsim::format_double(dcsim::ms_to_seconds(plan.t_logical)).c_str(),
              dcsim::format_double(dcsim::ms_to_seconds(plan.t_device)).c_str(),
              dcsim::format_double(dcsim::ms_to_seconds(plan.t_total)).c_str());
  std::cout << dcsim::allocation_plan_to_json(plan).dump(2) << "\n";
}

void print_task_summary(const dcsim::TaskReport& report) {
  std::printf("task %s: %s\n", report.task_id.c_str(), dcsim::task_status_name(report.status));
  if (!report.failure.empty()) std::printf("  failure: %s\n", report.failure.c_str());
  std::printf("  rounds: %zu  completed at %s s  (engine events %zu)\n", report.rounds.size(),
              dcsim::format_double(dcsim::ms_to_seconds(report.completed_at)).c_str(),
              report.engine_events_at_completion);
  std::printf("  messages: emitted %lld, delivered %lld, dropped %lld, residual %lld\n",
              static_cast<long long>(report.counts.emitted),
              static_cast<long long>(report.counts.delivered),
              static_cast<long long>(report.counts.dropped),
              static_cast<long long>(report.counts.residual_after_flush));
  std::printf("  aggregations: %zu (final version %lld)\n", report.aggregations.size(),
              static_cast<long long>(report.final_version));
  if (report.final_version > 0)
    std::printf("  final model: train_acc %s  loss %s  test_acc %s\n",
                dcsim::format_double(report.final_train_acc).c_str(),
                dcsim::format_double(report.final_loss).c_str(),
                dcsim::format_double(report.final_test_acc).c_str());
  std::printf("  traces: %s\n", report.traffic_csv.c_str());
}

int cmd_validate(const std::string& spec_path) {
  const dcsim::TaskSpec spec = dcsim::parse_task_spec(read_file(spec_path));
  const auto violations = dcsim::validate_task_spec(spec, dcsim::ResourcePool::for_task(spec));
  if (violations.empty()) {
    std::printf("%s: ok\n", spec.task_id.c_str());
    return kExitOk;
  }
  for (const auto& v : violations) std::printf("%s: %s\n", spec.task_id.c_str(), v.c_str());
  return kExitValidation;
}

int cmd_allocate(const std::string& spec_path, double ratio, bool use_ratio) {
  const dcsim::TaskSpec spec = dcsim::parse_task_spec(read_file(spec_path));
  const auto violations = dcsim::validate_task_spec(spec, dcsim::ResourcePool::for_task(spec));
  if (!violations.empty()) {
    for (const auto& v : violations) std::fprintf(stderr, "%s\n", v.c_str());
    return kExitValidation;
  }
  const dcsim::AllocationInput input = dcsim::AllocationInput::from_spec(spec);
  const dcsim::AllocationPlan plan =
      use_ratio ? dcsim::ratio_allocation(input, ratio) : dcsim::solve_allocation(input);
  print_plan(plan);
  return kExitOk;
}

int run_specs(const std::vector<std::string>& spec_paths, const dcsim::ResourcePool& pool,
              const std::string& out_dir, bool have_seed, std::uint64_t seed_override,
              bool batch) {
  dcsim::Coordinator coordinator(pool);
  for (const auto& path : spec_paths) {
    dcsim::TaskSpec spec = dcsim::parse_task_spec(read_file(path));
    if (have_seed) spec.seed = seed_override;
    coordinator.submit(std::move(spec));
  }
  coordinator.run();

  const dcsim::RunOutput out = resolve_out_dir(out_dir);
  std::filesystem::create_directories(out.out_dir);
  dcsim::write_task_outputs(coordinator, out);
  if (batch) dcsim::write_batch_report(coordinator, out);

  bool all_completed = true;
  for (const auto& record : coordinator.queue().records()) {
    const dcsim::TaskRunner* runner = coordinator.runner(record.spec.task_id);
    if (runner) print_task_summary(runner->report());
    else
      std::printf("task %s: %s (%s)\n", record.spec.task_id.c_str(),
                  dcsim::task_status_name(record.status), record.failure.c_str());
    all_completed = all_completed && record.status == dcsim::TaskStatus::Completed;
  }
  return all_completed ? kExitOk : kExitRuntime;
}

int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> report_paths;
  if (fs::exists(fs::path(dir) / "report.json")) {
    report_paths.push_back((fs::path(dir) / "report.json").string());
  } else {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory() && fs::exists(entry.path() / "report.json"))
        report_paths.push_back((entry.path() / "report.json").string());
    std::sort(report_paths.begin(), report_paths.end());
  }
  if (report_paths.empty()) throw dcsim::Error("no report.json under " + dir);

  bool consistent = true;
  for (const auto& path : report_paths) {
    const dcsim::json doc = dcsim::json::parse(read_file(path));
    const std::string task_id = doc.at("task_id").get<std::string>();
    std::printf("== %s (%s)\n", task_id.c_str(), doc.at("status").get<std::string>().c_str());

    const auto rows = dcsim::read_trace_csv(doc.at("files").at("traffic_csv").get<std::string>());
    auto recount = [&](dcsim::TraceEvent event) {
      std::int64_t total = 0;
      for (const auto& r : rows)
        if (r.task_id == task_id && r.event == event) total += r.count;
      return total;
    };
    const auto& counts = doc.at("counts");
    const std::pair<const char*, dcsim::TraceEvent> kinds[] = {
        {"emitted", dcsim::TraceEvent::Emit},        {"shelved", dcsim::TraceEvent::Shelve},
        {"dispatched", dcsim::TraceEvent::Dispatch}, {"delivered", dcsim::TraceEvent::Receive},
        {"dropped", dcsim::TraceEvent::Drop},        {"flushed", dcsim::TraceEvent::Flush}};
    for (const auto& [name, event] : kinds) {
      const std::int64_t from_trace = recount(event);
      const std::int64_t from_report = counts.at(name).get<std::int64_t>();
      if (from_trace != from_report) {
        consistent = false;
        std::printf("  MISMATCH %s: report %lld vs trace %lld\n", name,
                    static_cast<long long>(from_report), static_cast<long long>(from_trace));
      } else {
        std::printf("  %-10s %lld\n", name, static_cast<long long>(from_trace));
      }
    }

    const dcsim::TaskSpec spec = dcsim::parse_task_spec(doc.at("spec").dump());
    if (spec.dispatch_strategy.kind == dcsim::DispatchStrategySpec::Kind::TimeInterval) {
      for (const auto& rj : doc.at("rounds")) {
        const std::int64_t round = rj.at("round").get<std::int64_t>();
        const dcsim::TimeMs anchor =
            rj.at("comp_end_ms").get<dcsim::TimeMs>() + spec.dispatch_strategy.interval_start;
        try {
          const auto r = dcsim::curve_fidelity(
              spec.dispatch_strategy.rate_fn, spec.dispatch_strategy.domain_lo,
              spec.dispatch_strategy.domain_hi, spec.dispatch_strategy.interval_delta, rows,
              task_id, round, anchor, 1000);
          if (r)
            std::printf("  curve fidelity round %lld: r=%s\n", static_cast<long long>(round),
                        dcsim::format_double(*r).c_str());
          else
            std::printf("  curve fidelity round %lld: undefined (zero variance)\n",
                        static_cast<long long>(round));
        } catch (const dcsim::Error& e) {
          std::printf("  curve fidelity round %lld: %s\n", static_cast<long long>(round), e.what());
        }
      }
    }

    for (const auto& aj : doc.at("aggregations"))
      std::printf("  v%lld at %s s: %lld msgs, %lld samples, train_acc %s, test_acc %s%s\n",
                  aj.at("version").get<long long>(),
                  dcsim::format_double(aj.at("t_ms").get<double>() / 1000.0).c_str(),
                  aj.at("messages").get<long long>(), aj.at("samples").get<long long>(),
                  dcsim::format_double(aj.at("train_acc").get<double>()).c_str(),
                  dcsim::format_double(aj.at("test_acc").get<double>()).c_str(),
                  aj.at("end_of_task_flush").get<bool>() ? " (flush)" : "");
  }
  return consistent ? kExitOk : kExitValidation;
}

int cmd_gen_data(std::int64_t rows, std::int64_t dim, std::int64_t devices, std::uint64_t seed,
                 const std::string& out_path) {
  if (rows < 1 || dim < 1 || devices < 1)
    throw dcsim::Error("gen-data: rows, dim, devices must be >= 1");
  const auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  dcsim::RngStream rng(seed, "synthetic-ctr");
  dcsim::fl::ModelParams truth = dcsim::fl::ModelParams::zeros(dim);
  for (auto& w : truth.weights) w = 0.8 * rng.next_normal();

  std::ofstream out(out_path);
  if (!out) throw dcsim::Error("cannot write " + out_path);
  out << "device_id";
  for (int f = 0; f < dcsim::fl::kSyntheticFields; ++f) out << ",f" << f;
  out << ",click\n";
  for (std::int64_t i = 0; i < rows; ++i) {
    out << "dev_" << (i % devices);
    double z = truth.bias;
    for (int f = 0; f < dcsim::fl::kSyntheticFields; ++f) {
      const std::uint64_t cardinality = 20 + 10 * static_cast<std::uint64_t>(f);
      const std::uint64_t category = rng.next_below(cardinality);
      const std::string token = "f" + std::to_string(f) + "_c" + std::to_string(category);
      z += truth.weights[dcsim::fnv1a64(token) % dim];
      out << ',' << token;
    }
    out << ',' << (rng.next_double() < dcsim::fl::sigmoid(z) ? 1 : 0) << '\n';
  }

  dcsim::json schema;
  schema["label"] = "click";
  schema["device_id"] = "device_id";
  dcsim::json features = dcsim::json::array();
  for (int f = 0; f < dcsim::fl::kSyntheticFields; ++f)
    features.push_back("f" + std::to_string(f));
  schema["features"] = std::move(features);
  schema["hash_dim"] = dim;
  std::ofstream schema_out(out_path + ".schema.json");
  if (!schema_out) throw dcsim::Error("cannot write " + out_path + ".schema.json");
  schema_out << schema.dump(2) << "\n";
  std::printf("wrote %lld rows to %s (+schema)\n", static_cast<long long>(rows), out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"device-cloud collaborative computing simulator"};
  app.require_subcommand(1);

  std::string spec_path, out_dir = "out", pool_path, report_dir, data_out = "ctr.csv";
  std::vector<std::string> spec_paths;
  double ratio = 1.0;
  std::uint64_t seed = 0;
  std::int64_t rows = 10000, dim = 1024, devices = 100;

  CLI::App* validate = app.add_subcommand("validate", "check a task spec");
  validate->add_option("spec", spec_path, "task spec JSON")->required();

  CLI::App* allocate = app.add_subcommand("allocate", "solve the hybrid allocation");
  allocate->add_option("spec", spec_path, "task spec JSON")->required();
  CLI::Option* ratio_opt =
      allocate->add_option("--ratio", ratio, "fixed logical fraction instead of the solver");

  CLI::App* run = app.add_subcommand("run", "run one task");
  run->add_option("spec", spec_path, "task spec JSON")->required();
  run->add_option("--out", out_dir, "output directory");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "override the spec seed");

  CLI::App* run_batch = app.add_subcommand("run-batch", "run a queue of tasks");
  run_batch->add_option("specs", spec_paths, "task spec JSON files")->required();
  run_batch->add_option("--pool", pool_path, "pool totals JSON")->required();
  run_batch->add_option("--out", out_dir, "output directory");

  CLI::App* report = app.add_subcommand("report", "summarize and audit a finished run");
  report->add_option("dir", report_dir, "task or batch output directory")->required();

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic CTR csv");
  gen->add_option("--rows", rows, "row count");
  gen->add_option("--dim", dim, "hash dimension");
  gen->add_option("--devices", devices, "distinct device ids");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", data_out, "output csv path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(spec_path);
    if (allocate->parsed()) return cmd_allocate(spec_path, ratio, !ratio_opt->empty());
    if (run->parsed())
      return run_specs({spec_path},
                       dcsim::ResourcePool::for_task(dcsim::parse_task_spec(read_file(spec_path))),
                       out_dir, !seed_opt->empty(), seed, false);
    if (run_batch->parsed())
      return run_specs(spec_paths, dcsim::parse_pool(read_file(pool_path)), out_dir, false, 0,
                       true);
    if (report->parsed()) return cmd_report(report_dir);
    if (gen->parsed()) return cmd_gen_data(rows, dim, devices, seed, data_out);
  } catch (const dcsim::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
