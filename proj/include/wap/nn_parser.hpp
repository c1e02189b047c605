// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Workload extraction for the cost model.
//
// Counting rules (one multiply-add = 2 FLOPs, 4-byte weights):
//   MatMul  [B, I] x [I, O]:      fwd = 2*B*I*O
//   Conv2D  [B,H,W,Cin], KxK:     fwd = 2*B*H*W*Cin*Cout*K^2
//   backward of either:           bwd = 2 * fwd (grad-weights + grad-inputs)
// Elementwise and loss ops are not counted; their cost lives in the device
// efficiency curve.
#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "wap/graph_ir.hpp"

namespace wap {

inline constexpr std::int64_t kWeightElementBytes = 4;

struct FlopCount {
  std::int64_t fwd = 0;
  std::int64_t bwd = 0;
};

struct LayerWorkload {
  NodeId layer;
  OpKind kind = OpKind::kMatMul;
  std::int64_t flops_fwd = 0;
  std::int64_t flops_bwd = 0;
  /// Weight plus bias bytes of this layer (the bias of a BiasAdd fed directly
  /// by the layer is attributed to it).
  std::int64_t weight_bytes = 0;
  std::int64_t activation_bytes = 0;
  std::int64_t batch = 0;

  std::int64_t flops_total() const { return flops_fwd + flops_bwd; }
};

struct NetworkWorkload {
  std::vector<LayerWorkload> layers;
  std::int64_t global_batch = 0;
  std::int64_t total_weight_bytes = 0;
  /// Bias bytes that no primary layer owns; included in total_weight_bytes.
  std::int64_t unattached_weight_bytes = 0;

  std::int64_t total_flops() const;
};

/// Requires a shape-inferred graph. Throws kUnsupportedKind for non-primary
/// kinds.
FlopCount flops_of(const Graph& graph, const NodeId& id);

/// One entry per primary forward node in topo order. Throws kUnshapedGraph
/// when shapes are missing.
NetworkWorkload extract_workloads(const Graph& graph);

nlohmann::json workload_to_json(const NetworkWorkload& workload);

}  // namespace wap
