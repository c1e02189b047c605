// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "wap/graph_ir.hpp"

namespace wap {

struct TrainingGraphSpec {
  Graph forward;
  NodeId loss_node;
  double learning_rate = 0.1;
  std::vector<NodeId> variables;
};

/// Appends reverse-mode gradient nodes and one SgdUpdate per variable.
///
/// The loss is the batch MEAN: the builder pins the loss normalizer to the
/// global batch, so per-shard losses and gradients computed after a batch
/// split are already weighted by shard_size / global_batch and aggregate by
/// plain summation.
///
/// Naming: "<node>/grad_w", "<node>/grad_x", "<node>/grad" for single-input
/// gradients, "<tensor>/grad_sum" for fan-out accumulation and
/// "<variable>/update". Outputs are [loss, updates in `variables` order].
Graph build_training_graph(const TrainingGraphSpec& spec);

}  // namespace wap
