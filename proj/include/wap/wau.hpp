// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Workload analysis: per-degree step-time estimates and device-count choice.
//
//   t_estimate(d) = sum over layers of t_c(layer, d) + t_s(layer, d)
//
//   t_c = (F/d) / (peak * eff(F/d)),   eff(x) = x / (x + x_half)
//   t_s ring  = 2 W (d-1)/d / bw + 2 (d-1) chunk_latency
//   t_s naive = W (d-1) d / bw + link_latency
//
// with F the layer's forward+backward FLOPs and W its weight bytes. t_s = 0
// at d = 1.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wap/graph_ir.hpp"
#include "wap/nn_parser.hpp"

namespace wap {

struct DeviceProfile {
  std::string name;
  double peak_flops = 1e13;            // FLOP/s per device
  double efficiency_knee_flops = 0.0;  // x_half; 0 means always fully efficient
  double link_bandwidth = 1e10;        // bytes/s
  double link_latency = 0.0;           // s per point-to-point transfer
  double allreduce_chunk_latency = 0.0;  // s per ring step
  double power_idle = 0.0;             // W per used device at zero utilization
  double power_peak = 0.0;             // W per used device at full utilization
  double host_power = 0.0;             // W, constant

  /// eff(x) = x / (x + x_half), in (0, 1]; 1 when x_half == 0.
  double efficiency(double work_flops) const;
};

/// Throws kParse / kPrecondition for bad fields (all must be positive except
/// the knee, latencies and power_idle, which may be zero).
DeviceProfile profile_from_json(const nlohmann::json& doc, const std::string& where = "");
nlohmann::json profile_to_json(const DeviceProfile& profile);
DeviceProfile load_profile(const std::filesystem::path& path);

enum class AggregationAlgo { kNaiveAllToAll, kRing };
std::string_view to_string(AggregationAlgo algo);

double compute_time(const LayerWorkload& layer, int d, const DeviceProfile& profile);
double comm_time(const LayerWorkload& layer, int d, const DeviceProfile& profile,
                 AggregationAlgo algo);

struct CostEstimate {
  int d = 1;
  double t_c_total = 0.0;
  double t_s_total = 0.0;
  double t_estimate = 0.0;
  double predicted_throughput = 0.0;  // samples/s; 0 when t_estimate == 0
};

CostEstimate estimate_total(const NetworkWorkload& workload, int d,
                            const DeviceProfile& profile, AggregationAlgo algo);

struct ParallelPlan {
  int d = 1;
  DeviceSet devices = DeviceSet::first_n(1);
  std::vector<CostEstimate> estimates;
  double predicted_power = 0.0;
  AggregationAlgo algo = AggregationAlgo::kRing;

  const CostEstimate& chosen() const;
};

/// Sweeps every d in [1, |devices|] dividing the global batch; smallest d wins
/// ties.
ParallelPlan select_parallelism(const NetworkWorkload& workload,
                                const DeviceSet& devices,
                                const DeviceProfile& profile,
                                AggregationAlgo algo = AggregationAlgo::kRing);

/// Same sweep, but forces the chosen degree (the WAU bypass).
ParallelPlan forced_plan(const NetworkWorkload& workload, const DeviceSet& devices,
                         const DeviceProfile& profile, int d,
                         AggregationAlgo algo = AggregationAlgo::kRing);

/// A plan carrying only a degree and devices, for rewrites that need nothing
/// else.
ParallelPlan plan_for_degree(int d, const DeviceSet& devices);

/// host + sum over used devices of idle + (peak - idle) * utilization, where
/// utilization = t_c / (t_c + t_s) * eff(total FLOPs / d).
double estimate_power(const ParallelPlan& plan, const NetworkWorkload& workload,
                      const DeviceProfile& profile);

nlohmann::json plan_to_json(const ParallelPlan& plan);

}  // namespace wap
