// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Discrete-event timing and power model of one training step.
//
// Machine model: each device runs one thing at a time; all devices share
// one interconnect ("fabric") that carries one transfer at a time. A
// point-to-point transfer occupies the fabric and both endpoint devices for
// link_latency + bytes / link_bandwidth. Computation and communication never
// overlap, matching the additive step-time model used by the cost estimator.
//
// Per-node compute: a MatMul/Conv2D replica costs compute_time() of its own
// sharded workload at d = 1, i.e. the same formula the cost estimator uses;
// the forward node takes 1/3 of it and the gradient nodes that name it via
// attr "forward" share the remaining 2/3 (backward flops are twice forward).
// Everything else is free. Host nodes (no device) cost nothing and their
// edges are feeds, not traffic.
//
// AllReduceSum runs the ring algorithm: W bytes cut into d chunks (remainder
// on the last), 2(d-1) steps in which every participant forwards one chunk to
// its ring successor. A step holds the fabric and all participants for
// allreduce_chunk_latency + largest_chunk / link_bandwidth.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wap/graph_ir.hpp"
#include "wap/wau.hpp"

namespace wap {

struct NodeSpan {
  std::optional<DeviceId> device;
  double start = 0.0;
  double end = 0.0;
};

struct LinkTransfer {
  DeviceId src = 0;
  DeviceId dst = 0;
  std::int64_t bytes = 0;
  double start = 0.0;
  double end = 0.0;
  /// Tensor carried (the producing node output).
  std::string tensor;
  /// "activation", or "grad:<variable>" for gradient aggregation traffic.
  std::string purpose;
};

struct ExecutionTrace {
  std::map<NodeId, NodeSpan> node_spans;
  std::vector<LinkTransfer> link_transfers;
  double step_time = 0.0;
};

struct SimResult {
  double step_time = 0.0;
  std::int64_t global_batch = 0;
  double throughput = 0.0;  // samples/s
  double energy_per_step = 0.0;  // J
  std::int64_t comm_bytes_total = 0;
  std::map<std::pair<DeviceId, DeviceId>, std::int64_t> comm_bytes_per_link;
  int devices_used = 0;
};

struct Simulation {
  ExecutionTrace trace;
  SimResult result;
};

/// Throws kUnassignedDevice when a multi-device graph leaves a compute node
/// without a device. Single-device graphs may leave devices unset.
Simulation simulate_timing(const Graph& graph, const DeviceProfile& profile);

struct CommVolume {
  std::int64_t total_bytes = 0;
  /// Gradient aggregation bytes only.
  std::int64_t aggregation_bytes = 0;
  /// Aggregation bytes per variable.
  std::map<std::string, std::int64_t> per_variable;
};

CommVolume comm_volume(const ExecutionTrace& trace);

nlohmann::json trace_to_json(const ExecutionTrace& trace);
nlohmann::json sim_result_to_json(const SimResult& result);

}  // namespace wap
