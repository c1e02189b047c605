// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel rewrite of a single-device training graph in three steps:
//
//   Step1 replicate_primary:  MatMul/Conv2D and their gradient nodes get one
//       replica per device, fed by batch Splits and merged by Concats.
//       Variables and their SgdUpdates are replicated too; each device's
//       update consumes an all-to-all AddN(role=grad_aggregate) of the
//       gradient replicas.
//   Step2 localize_auxiliary: auxiliary nodes (activations, loss, bias and
//       loss gradients) on the replicated path are cloned per device and
//       every Concat->Split pair that became adjacent is cancelled.
//   Step3 optimize_gradient_aggregation: every all-to-all AddN cluster becomes
//       one AllReduceSum spanning the devices.
//
// Replicas are named "<original id>/dev<device>". Graph inputs and their
// Splits stay on the host, as do the output fetches that combine per-device
// results (e.g. the loss, summed from per-device partial losses).
#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "wap/graph_ir.hpp"
#include "wap/wau.hpp"

namespace wap {

enum class TransformStep { kStep1, kStep2, kStep3 };
std::string_view to_string(TransformStep step);
std::optional<TransformStep> parse_transform_step(std::string_view name);

struct TransformReport {
  TransformStep step = TransformStep::kStep1;
  std::int64_t nodes_replicated = 0;
  std::int64_t splits_inserted = 0;
  std::int64_t concats_inserted = 0;
  std::int64_t split_concat_pairs_removed = 0;
  /// Adjacent pairs left in place because the Concat has other consumers.
  std::int64_t split_concat_pairs_kept = 0;
  std::int64_t cross_device_edges_before = 0;
  std::int64_t cross_device_edges_after = 0;
  std::int64_t aggregators_removed = 0;
  std::int64_t allreduce_nodes_inserted = 0;
};

struct TransformResult {
  Graph graph;
  TransformReport report;
};

TransformResult replicate_primary(const Graph& graph, const ParallelPlan& plan);
TransformResult localize_auxiliary(const Graph& graph, const ParallelPlan& plan);
TransformResult optimize_gradient_aggregation(const Graph& graph,
                                              const ParallelPlan& plan);

struct PipelineResult {
  Graph graph;
  std::vector<TransformReport> reports;
};

/// Step1 -> Step2 -> Step3 (up to `stop_after`) when plan.d >= 2; the input
/// unchanged, with three empty reports, when plan.d == 1.
PipelineResult transform(const Graph& graph, const ParallelPlan& plan,
                         TransformStep stop_after = TransformStep::kStep3);

NodeId replica_id(const NodeId& id, DeviceId device);
/// Strips one trailing "/dev<digits>".
NodeId base_id(const NodeId& id);
bool is_replica_id(const NodeId& id);

struct Edge {
  TensorRef from;
  NodeId to;
};

/// Edges whose endpoints sit on two different devices, plus d ring links per
/// AllReduceSum. Host endpoints never count.
std::int64_t count_cross_device_edges(const Graph& graph);

/// AddN(role=grad_aggregate) and AllReduceSum.
bool is_gradient_aggregation(const Node& node);

/// Cross-device edges not feeding (or leaving) a gradient aggregation node.
std::vector<Edge> non_aggregation_cross_device_edges(const Graph& graph);

struct PartitionSummary {
  /// Connected components after removing host and AllReduceSum nodes.
  int partitions = 0;
  bool partitions_device_local = true;
  int allreduce_nodes = 0;
  int grad_aggregate_addn = 0;
  /// Distinct variables by base id.
  int variables = 0;
};

PartitionSummary summarize_partitions(const Graph& graph);

nlohmann::json report_to_json(const TransformReport& report);

}  // namespace wap
