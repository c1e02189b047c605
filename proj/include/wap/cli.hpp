// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "wap/graph_modifier.hpp"

namespace wap {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or verification failed
inline constexpr int kExitUsage = 2;

struct CliConfig {
  std::string subcommand;
  std::filesystem::path graph_path;
  /// File path, or a profile name looked up in $WAP_PROFILE_DIR.
  std::string profile;
  int device_count = 1;
  std::optional<int> forced_d;
  std::optional<TransformStep> stop_after;
  AggregationAlgo algo = AggregationAlgo::kRing;
  std::filesystem::path original_path;
  std::filesystem::path transformed_path;
  std::filesystem::path output_path;
  std::filesystem::path report_path;
  std::filesystem::path trace_path;
  std::filesystem::path workloads_path;
  std::uint64_t seed = 42;
  double tolerance = 1e-6;
  int verbosity = 0;
};

using TransformFn =
    std::function<PipelineResult(const Graph&, const ParallelPlan&, TransformStep)>;

/// Profile file for `name_or_path`: an existing path as given, else
/// $WAP_PROFILE_DIR/<name> or $WAP_PROFILE_DIR/<name>.json. Throws kIo.
std::filesystem::path resolve_profile(const std::string& name_or_path);

/// Executes one subcommand. `rewrite` replaces the graph rewrite (tests use
/// it to inject faulty transforms into `auto`).
int run(const CliConfig& config, std::ostream& out, std::ostream& err,
        const TransformFn& rewrite = TransformFn(&transform));

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wap
