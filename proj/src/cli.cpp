// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/cli.hpp"

#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "wap/evaluator.hpp"
#include "wap/graph_io.hpp"
#include "wap/nn_parser.hpp"
#include "wap/simulator.hpp"

namespace wap {

namespace fs = std::filesystem;

fs::path resolve_profile(const std::string& name_or_path) {
  if (name_or_path.empty()) throw Error(ErrorCode::kIo, "no profile given");
  std::error_code ec;
  if (fs::is_regular_file(name_or_path, ec)) return name_or_path;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("WAP_PROFILE_DIR"); env && *env) dirs.emplace_back(env);
#ifdef WAP_DEFAULT_PROFILE_DIR
  dirs.emplace_back(WAP_DEFAULT_PROFILE_DIR);
#endif
  for (const auto& dir : dirs) {
    for (const auto& candidate : {dir / name_or_path, dir / (name_or_path + ".json")}) {
      if (fs::is_regular_file(candidate, ec)) return candidate;
    }
  }
  throw Error(ErrorCode::kIo, "profile '" + name_or_path +
                                  "' not found (searched the path itself and $WAP_PROFILE_DIR)");
}

namespace {

/// Input-file and argument problems are usage errors; everything about graph
/// content is a validation failure.
int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kPrecondition:
    case ErrorCode::kNondivisibleBatch:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

void require_file(const fs::path& path, const std::string& flag) {
  if (path.empty()) throw Error(ErrorCode::kIo, flag + " is required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kIo, flag + ": no such file '" + path.string() + "'");
  }
}

std::string dump(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

struct Loaded {
  Graph graph;
  DeviceProfile profile;
};

Loaded load_inputs(const CliConfig& config) {
  require_file(config.graph_path, "--graph");
  Loaded loaded;
  loaded.profile = load_profile(resolve_profile(config.profile));
  loaded.graph = load_graph(config.graph_path);
  return loaded;
}

ParallelPlan make_plan(const CliConfig& config, const NetworkWorkload& workload,
                       const DeviceProfile& profile) {
  if (config.device_count < 1) {
    throw Error(ErrorCode::kPrecondition, "--devices must be >= 1");
  }
  const DeviceSet devices = DeviceSet::first_n(config.device_count);
  if (config.forced_d) {
    return forced_plan(workload, devices, profile, *config.forced_d, config.algo);
  }
  return select_parallelism(workload, devices, profile, config.algo);
}

void print_estimates(std::ostream& out, const Graph& graph, const NetworkWorkload& workload,
                     const ParallelPlan& plan) {
  out << "graph " << graph.name() << ": " << workload.layers.size()
      << " layers, global batch " << workload.global_batch << ", "
      << workload.total_weight_bytes << " weight bytes\n";
  out << "  d        t_c (s)        t_s (s)   t_estimate (s)    samples/s\n";
  for (const auto& e : plan.estimates) {
    out << "  " << std::setw(1) << e.d << std::scientific << std::setprecision(6) << "  "
        << std::setw(13) << e.t_c_total << "  " << std::setw(13) << e.t_s_total << "  "
        << std::setw(15) << e.t_estimate << "  " << std::defaultfloat << std::setprecision(6)
        << std::setw(11) << e.predicted_throughput << (e.d == plan.d ? "  <-" : "") << "\n";
  }
  out << "selected d=" << plan.d << " (" << to_string(plan.algo)
      << " aggregation), predicted power " << std::setprecision(6) << plan.predicted_power
      << " W\n";
}

void print_sim(std::ostream& out, const std::string& label, const SimResult& r) {
  out << label << ": step " << std::setprecision(6) << r.step_time << " s, " << r.throughput
      << " samples/s, " << r.energy_per_step << " J/step, " << r.comm_bytes_total
      << " bytes moved on " << r.devices_used << " device(s)\n";
}

void print_equivalence(std::ostream& out, const EquivalenceReport& report) {
  for (const auto& o : report.outputs) {
    out << "  " << (o.pass ? "ok  " : "FAIL") << " " << o.output
        << "  max relative deviation " << std::setprecision(3) << std::scientific
        << o.max_relative_deviation << std::defaultfloat;
    if (!o.pass) out << " (at '" << o.worst_name << "')";
    out << "\n";
  }
  for (const auto& d : report.diagnostics) out << "  diagnostic: " << d << "\n";
}

nlohmann::json steps_to_json(const std::vector<TransformReport>& reports) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& r : reports) steps.push_back(report_to_json(r));
  return steps;
}

int cmd_validate(const CliConfig& config, std::ostream& out) {
  require_file(config.graph_path, "--graph");
  const Graph graph = graph_from_json(
      parse_json_text(read_text_file(config.graph_path), config.graph_path.string()),
      config.graph_path.string());
  const ValidationReport report = validate(graph);
  for (const auto& f : report.findings) {
    out << "node '" << f.node << "': " << f.rule << ": " << f.detail << "\n";
  }
  if (!report.ok()) {
    out << "invalid: " << report.findings.size() << " finding(s)\n";
    return kExitFailure;
  }
  const Graph shaped = infer_shapes(graph);
  out << "valid: " << shaped.size() << " nodes, " << shaped.outputs().size() << " outputs\n";
  return kExitOk;
}

int cmd_estimate(const CliConfig& config, std::ostream& out) {
  const Loaded in = load_inputs(config);
  const NetworkWorkload workload = extract_workloads(in.graph);
  const ParallelPlan plan = make_plan(config, workload, in.profile);
  print_estimates(out, in.graph, workload, plan);
  if (!config.workloads_path.empty()) {
    write_file_atomic(config.workloads_path, dump(workload_to_json(workload)));
  }
  if (!config.report_path.empty()) {
    write_file_atomic(config.report_path,
                      dump({{"graph", in.graph.name()},
                            {"profile", in.profile.name},
                            {"plan", plan_to_json(plan)}}));
  }
  return kExitOk;
}

int cmd_transform(const CliConfig& config, std::ostream& out, const TransformFn& rewrite) {
  const Loaded in = load_inputs(config);
  if (config.output_path.empty()) throw Error(ErrorCode::kIo, "-o is required");
  const NetworkWorkload workload = extract_workloads(in.graph);
  const ParallelPlan plan = make_plan(config, workload, in.profile);
  const PipelineResult result =
      rewrite(in.graph, plan, config.stop_after.value_or(TransformStep::kStep3));
  out << "d=" << plan.d << (config.forced_d ? " (forced)" : " (selected)") << "\n";
  for (const auto& r : result.reports) {
    out << "  " << to_string(r.step) << ": replicated " << r.nodes_replicated
        << ", splits +" << r.splits_inserted << ", concats +" << r.concats_inserted
        << ", pairs removed " << r.split_concat_pairs_removed << ", allreduce +"
        << r.allreduce_nodes_inserted << ", cross-device edges " << r.cross_device_edges_before
        << " -> " << r.cross_device_edges_after << "\n";
  }
  write_file_atomic(config.output_path, serialize(result.graph));
  if (!config.report_path.empty()) {
    write_file_atomic(config.report_path, dump({{"graph", in.graph.name()},
                                                {"profile", in.profile.name},
                                                {"plan", plan_to_json(plan)},
                                                {"steps", steps_to_json(result.reports)}}));
  }
  out << "wrote " << config.output_path.string() << " (" << result.graph.size()
      << " nodes)\n";
  return kExitOk;
}

int cmd_verify(const CliConfig& config, std::ostream& out) {
  require_file(config.original_path, "--original");
  require_file(config.transformed_path, "--transformed");
  const Graph original = load_graph(config.original_path);
  const Graph transformed = load_graph(config.transformed_path);
  const auto inputs = generate_inputs(original, config.seed);
  const EquivalenceReport report =
      compare(original, transformed, inputs, config.seed, config.tolerance);
  print_equivalence(out, report);
  if (!config.report_path.empty()) {
    write_file_atomic(config.report_path, dump(equivalence_to_json(report)));
  }
  if (!report.passed()) {
    out << "verification FAILED: output '" << report.first_failure()
        << "' deviates beyond tolerance " << config.tolerance << "\n";
    return kExitFailure;
  }
  out << "verification passed (tolerance " << config.tolerance << ")\n";
  return kExitOk;
}

int cmd_bench(const CliConfig& config, std::ostream& out) {
  const Loaded in = load_inputs(config);
  const Simulation sim = simulate_timing(in.graph, in.profile);
  print_sim(out, in.graph.name(), sim.result);
  const CommVolume volume = comm_volume(sim.trace);
  out << "gradient aggregation bytes: " << volume.aggregation_bytes << "\n";
  if (!config.trace_path.empty()) {
    write_file_atomic(config.trace_path, dump(trace_to_json(sim.trace)));
  }
  if (!config.report_path.empty()) {
    nlohmann::json doc = sim_result_to_json(sim.result);
    doc["aggregation_bytes"] = volume.aggregation_bytes;
    doc["profile"] = in.profile.name;
    write_file_atomic(config.report_path, dump(doc));
  }
  return kExitOk;
}

int cmd_auto(const CliConfig& config, std::ostream& out, std::ostream& err,
             const TransformFn& rewrite) {
  const Loaded in = load_inputs(config);
  if (config.output_path.empty()) throw Error(ErrorCode::kIo, "-o is required");
  const NetworkWorkload workload = extract_workloads(in.graph);
  const ParallelPlan plan = make_plan(config, workload, in.profile);
  print_estimates(out, in.graph, workload, plan);

  const PipelineResult result = rewrite(in.graph, plan, TransformStep::kStep3);
  const auto inputs = generate_inputs(in.graph, config.seed);
  const EquivalenceReport equivalence =
      compare(in.graph, result.graph, inputs, config.seed, config.tolerance);
  print_equivalence(out, equivalence);
  if (!equivalence.passed()) {
    err << "refusing to emit the d=" << plan.d << " graph: output '"
        << equivalence.first_failure() << "' deviates beyond tolerance " << config.tolerance
        << "\n";
    return kExitFailure;
  }

  const Simulation before = simulate_timing(in.graph, in.profile);
  const Simulation after = simulate_timing(result.graph, in.profile);
  print_sim(out, "single device", before.result);
  print_sim(out, "d=" + std::to_string(plan.d), after.result);
  const double speedup = after.result.throughput / before.result.throughput;
  out << "speedup " << std::setprecision(4) << speedup << "x\n";

  nlohmann::json report{{"graph", in.graph.name()},
                        {"profile", in.profile.name},
                        {"plan", plan_to_json(plan)},
                        {"decision", plan.d == 1
                                         ? "d=1: the estimated step time is lowest on one "
                                           "device, so the graph is emitted unchanged"
                                         : "d=" + std::to_string(plan.d) +
                                               ": the estimated step time is lowest with " +
                                               std::to_string(plan.d) + " replicas"},
                        {"steps", steps_to_json(result.reports)},
                        {"verification", equivalence_to_json(equivalence)},
                        {"bench",
                         {{"original", sim_result_to_json(before.result)},
                          {"transformed", sim_result_to_json(after.result)},
                          {"speedup", speedup}}}};
  write_file_atomic(config.output_path, serialize(result.graph));
  if (!config.report_path.empty()) write_file_atomic(config.report_path, dump(report));
  if (!config.trace_path.empty()) {
    write_file_atomic(config.trace_path, dump(trace_to_json(after.trace)));
  }
  out << "wrote " << config.output_path.string() << " (d=" << plan.d << ", verified)\n";
  return kExitOk;
}

}  // namespace

int run(const CliConfig& config, std::ostream& out, std::ostream& err,
        const TransformFn& rewrite) {
  try {
    if (config.forced_d && (*config.forced_d < 1 || *config.forced_d > config.device_count)) {
      throw Error(ErrorCode::kPrecondition, "--force-d " + std::to_string(*config.forced_d) +
                                                " outside [1, " +
                                                std::to_string(config.device_count) + "]");
    }
    const std::string& cmd = config.subcommand;
    if (cmd == "validate") return cmd_validate(config, out);
    if (cmd == "estimate") return cmd_estimate(config, out);
    if (cmd == "transform") return cmd_transform(config, out, rewrite);
    if (cmd == "verify") return cmd_verify(config, out);
    if (cmd == "bench") return cmd_bench(config, out);
    if (cmd == "auto") return cmd_auto(config, out, err, rewrite);
    err << "error: unknown subcommand '" << cmd << "'\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"wap: workload-aware data-parallel rewriting of training graphs"};
  app.require_subcommand(1);
  CliConfig config;
  std::string stop_after;
  std::string algo = "ring";
  int forced_d = 0;

  auto add_graph = [&](CLI::App* sub) {
    sub->add_option("--graph", config.graph_path, "single-device graph (JSON)")->required();
  };
  auto add_profile = [&](CLI::App* sub) {
    sub->add_option("--profile", config.profile, "device profile file or name")->required();
  };
  auto add_plan = [&](CLI::App* sub) {
    sub->add_option("--devices", config.device_count, "available devices")->required();
    sub->add_option("--force-d", forced_d, "bypass the estimator and use this degree");
    sub->add_option("--algo", algo, "aggregation algorithm the estimator assumes")
        ->check(CLI::IsMember({"ring", "naive"}));
  };
  auto add_report = [&](CLI::App* sub) {
    sub->add_option("--report", config.report_path, "machine-readable report (JSON)");
  };
  auto add_check = [&](CLI::App* sub) {
    sub->add_option("--seed", config.seed, "input/variable seed");
    sub->add_option("--tol", config.tolerance, "relative tolerance");
  };

  auto* validate_cmd = app.add_subcommand("validate", "check graph invariants");
  add_graph(validate_cmd);

  auto* estimate_cmd = app.add_subcommand("estimate", "per-degree step-time estimates");
  add_graph(estimate_cmd);
  add_profile(estimate_cmd);
  add_plan(estimate_cmd);
  add_report(estimate_cmd);
  estimate_cmd->add_option("--dump-workloads", config.workloads_path,
                           "write per-layer workloads (JSON)");

  auto* transform_cmd = app.add_subcommand("transform", "rewrite into a data-parallel graph");
  add_graph(transform_cmd);
  add_profile(transform_cmd);
  add_plan(transform_cmd);
  add_report(transform_cmd);
  transform_cmd->add_option("--stop-after", stop_after, "last step to apply")
      ->check(CLI::IsMember({"step1", "step2", "step3"}));
  transform_cmd->add_option("-o,--output", config.output_path, "transformed graph")->required();

  auto* verify_cmd = app.add_subcommand("verify", "interpret both graphs and compare outputs");
  verify_cmd->add_option("--original", config.original_path)->required();
  verify_cmd->add_option("--transformed", config.transformed_path)->required();
  add_check(verify_cmd);
  add_report(verify_cmd);

  auto* bench_cmd = app.add_subcommand("bench", "simulate one training step");
  add_graph(bench_cmd);
  add_profile(bench_cmd);
  add_report(bench_cmd);
  bench_cmd->add_option("--trace", config.trace_path, "full execution trace (JSON)");

  auto* auto_cmd =
      app.add_subcommand("auto", "estimate, transform, verify and bench in one go");
  add_graph(auto_cmd);
  add_profile(auto_cmd);
  add_plan(auto_cmd);
  add_check(auto_cmd);
  add_report(auto_cmd);
  auto_cmd->add_option("-o,--output", config.output_path, "emitted graph")->required();
  auto_cmd->add_option("--trace", config.trace_path, "trace of the emitted graph (JSON)");

  app.add_flag("-v,--verbose", config.verbosity, "more output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (const auto* sub = app.get_subcommands().empty() ? nullptr
                                                        : app.get_subcommands().front()) {
      err << sub->help();
    }
    return kExitUsage;
  }
  config.subcommand = app.get_subcommands().front()->get_name();
  if (forced_d != 0) config.forced_d = forced_d;
  if (!stop_after.empty()) config.stop_after = parse_transform_step(stop_after);
  config.algo = algo == "naive" ? AggregationAlgo::kNaiveAllToAll : AggregationAlgo::kRing;
  return run(config, out, err);
}

}  // namespace wap
