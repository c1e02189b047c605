// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/nn_parser.hpp"

#include <numeric>

namespace wap {

std::int64_t NetworkWorkload::total_flops() const {
  return std::accumulate(layers.begin(), layers.end(), std::int64_t{0},
                         [](std::int64_t acc, const LayerWorkload& l) {
                           return acc + l.flops_total();
                         });
}

namespace {

void require_shapes(const Graph& graph) {
  for (const auto& [id, node] : graph.nodes()) {
    if (!node.output_shape) {
      throw Error(ErrorCode::kUnshapedGraph,
                  "node '" + id + "' has no inferred shape; run infer_shapes first");
    }
  }
}

}  // namespace

FlopCount flops_of(const Graph& graph, const NodeId& id) {
  const Node& node = graph.node(id);
  if (!is_primary(node.kind)) {
    throw Error(ErrorCode::kUnsupportedKind,
                "node '" + id + "' (" + std::string(to_string(node.kind)) +
                    ") is not a compute layer");
  }
  const TensorShape& x = graph.shape_of(node.inputs[0]);
  const TensorShape& w = graph.shape_of(node.inputs[1]);
  std::int64_t fwd = 0;
  if (node.kind == OpKind::kMatMul) {
    fwd = 2 * x.dims[0] * w.dims[0] * w.dims[1];
  } else {
    const std::int64_t k = w.dims[0];
    fwd = 2 * x.dims[0] * x.dims[1] * x.dims[2] * w.dims[2] * w.dims[3] * k * k;
  }
  return {fwd, 2 * fwd};
}

NetworkWorkload extract_workloads(const Graph& graph) {
  require_shapes(graph);
  const auto users = graph.consumers();
  auto bias_bytes_of = [&](const NodeId& producer) -> std::int64_t {
    std::int64_t bytes = 0;
    const auto it = users.find(producer);
    if (it == users.end()) return 0;
    for (const auto& user : it->second) {
      const Node& consumer = graph.node(user);
      if (consumer.kind == OpKind::kBiasAdd && consumer.inputs[0].node == producer) {
        bytes += graph.shape_of(consumer.inputs[1]).num_elements() * kWeightElementBytes;
      }
    }
    return bytes;
  };

  NetworkWorkload workload;
  std::int64_t attached_bias = 0;
  std::int64_t all_bias = 0;
  for (const auto& id : topo_order(graph)) {
    const Node& node = graph.node(id);
    if (node.kind == OpKind::kBiasAdd) {
      all_bias += graph.shape_of(node.inputs[1]).num_elements() * kWeightElementBytes;
    }
    if (node.kind == OpKind::kInput && node.output_shape->batch_axis &&
        workload.global_batch == 0) {
      workload.global_batch = node.output_shape->batch();
    }
    if (!is_primary(node.kind)) continue;
    const FlopCount flops = flops_of(graph, id);
    LayerWorkload layer;
    layer.layer = id;
    layer.kind = node.kind;
    layer.flops_fwd = flops.fwd;
    layer.flops_bwd = flops.bwd;
    const std::int64_t bias = bias_bytes_of(id);
    attached_bias += bias;
    layer.weight_bytes =
        graph.shape_of(node.inputs[1]).num_elements() * kWeightElementBytes + bias;
    layer.activation_bytes = node.output_shape->num_elements() * kWeightElementBytes;
    layer.batch = graph.shape_of(node.inputs[0]).dims[0];
    workload.total_weight_bytes += layer.weight_bytes;
    workload.layers.push_back(std::move(layer));
  }
  workload.unattached_weight_bytes = all_bias - attached_bias;
  workload.total_weight_bytes += workload.unattached_weight_bytes;
  if (workload.global_batch == 0 && !workload.layers.empty()) {
    workload.global_batch = workload.layers.front().batch;
  }
  for (const auto& layer : workload.layers) {
    if (workload.global_batch % layer.batch != 0) {
      throw Error(ErrorCode::kInvalidGraph,
                  "layer '" + layer.layer + "' batch " + std::to_string(layer.batch) +
                      " is inconsistent with global batch " +
                      std::to_string(workload.global_batch));
    }
  }
  return workload;
}

nlohmann::json workload_to_json(const NetworkWorkload& workload) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : workload.layers) {
    layers.push_back({{"layer", l.layer},
                      {"kind", std::string(to_string(l.kind))},
                      {"flops_fwd", l.flops_fwd},
                      {"flops_bwd", l.flops_bwd},
                      {"weight_bytes", l.weight_bytes},
                      {"activation_bytes", l.activation_bytes},
                      {"batch", l.batch}});
  }
  return {{"layers", std::move(layers)},
          {"global_batch", workload.global_batch},
          {"total_weight_bytes", workload.total_weight_bytes},
          {"unattached_weight_bytes", workload.unattached_weight_bytes},
          {"total_flops", workload.total_flops()}};
}

}  // namespace wap
