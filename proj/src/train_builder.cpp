// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/train_builder.hpp"

#include <algorithm>

namespace wap {

namespace {

Node make_node(NodeId id, OpKind kind, std::vector<TensorRef> inputs,
               std::optional<DeviceId> device) {
  Node node;
  node.id = std::move(id);
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.device = device;
  return node;
}

class GradientEmitter {
 public:
  explicit GradientEmitter(Graph& graph) : graph_(graph) {}

  TensorRef emit(Node node) {
    if (graph_.has_node(node.id)) {
      throw Error(ErrorCode::kInvalidGraph,
                  "generated gradient node '" + node.id +
                      "' collides with an existing node");
    }
    const NodeId id = node.id;
    graph_.add_node(std::move(node));
    return {id, 0};
  }

  void contribute(const NodeId& target, TensorRef grad) {
    contributions_[target].push_back(std::move(grad));
  }

  /// Total upstream gradient of `id`, summing fan-out contributions.
  std::optional<TensorRef> gradient_of(const NodeId& id) {
    const auto it = contributions_.find(id);
    if (it == contributions_.end() || it->second.empty()) return std::nullopt;
    if (it->second.size() == 1) return it->second.front();
    Node sum = make_node(id + "/grad_sum", OpKind::kAddN, it->second,
                         graph_.node(id).device);
    sum.attrs.set("role", std::string("sum"));
    return emit(std::move(sum));
  }

 private:
  Graph& graph_;
  std::map<NodeId, std::vector<TensorRef>> contributions_;
};

}  // namespace

Graph build_training_graph(const TrainingGraphSpec& spec) {
  Graph graph = infer_shapes(spec.forward);
  if (!graph.has_node(spec.loss_node)) {
    throw Error(ErrorCode::kInvalidGraph,
                "loss node '" + spec.loss_node + "' does not exist");
  }
  if (!(spec.learning_rate > 0.0)) {
    throw Error(ErrorCode::kPrecondition, "learning rate must be positive");
  }
  {
    const Node& loss = graph.node(spec.loss_node);
    if (loss.kind != OpKind::kSoftmaxXentLoss || loss.output_shape->dims != std::vector<std::int64_t>{1}) {
      throw Error(ErrorCode::kInvalidGraph,
                  "loss node '" + spec.loss_node +
                      "' must be a scalar SoftmaxXentLoss");
    }
  }
  for (const auto& v : spec.variables) {
    if (!graph.has_node(v) || graph.node(v).kind != OpKind::kVariable) {
      throw Error(ErrorCode::kInvalidGraph, "'" + v + "' is not a Variable node");
    }
  }

  const std::vector<NodeId> order = topo_order(graph);

  // Forward closure from the variables, backward closure from the loss.
  std::set<NodeId> needs_grad(spec.variables.begin(), spec.variables.end());
  for (const auto& id : order) {
    for (const auto& in : graph.node(id).inputs) {
      if (needs_grad.count(in.node)) needs_grad.insert(id);
    }
  }
  std::set<NodeId> feeds_loss{spec.loss_node};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!feeds_loss.count(*it)) continue;
    for (const auto& in : graph.node(*it).inputs) feeds_loss.insert(in.node);
  }
  for (const auto& v : spec.variables) {
    if (!feeds_loss.count(v)) {
      throw Error(ErrorCode::kUnreachableVariable,
                  "variable '" + v + "' is not on any path to loss '" +
                      spec.loss_node + "'");
    }
  }
  auto active = [&](const NodeId& id) {
    return needs_grad.count(id) && feeds_loss.count(id);
  };
  for (const auto& id : order) {
    if (!active(id)) continue;
    const Node& node = graph.node(id);
    const bool leaf = node.kind == OpKind::kVariable;
    const bool is_loss = id == spec.loss_node;
    if (leaf) continue;
    const bool ok = traits(node.kind).differentiable &&
                    node.kind != OpKind::kInput &&
                    !(node.kind == OpKind::kSoftmaxXentLoss && !is_loss) &&
                    !(node.kind == OpKind::kAddN &&
                      node.attrs.get_string_or("role", "sum") != "sum");
    if (!ok) {
      throw Error(ErrorCode::kNonDifferentiable,
                  "node '" + id + "' (" + std::string(to_string(node.kind)) +
                      ") lies between a variable and the loss but is not differentiable");
    }
    if (is_loss && active(node.inputs[1].node)) {
      throw Error(ErrorCode::kNonDifferentiable,
                  "loss '" + id + "': gradients with respect to labels are not supported");
    }
  }

  Node& loss = graph.mutable_node(spec.loss_node);
  if (!loss.attrs.has("normalizer")) {
    loss.attrs.set("normalizer", graph.shape_of(loss.inputs[0]).dims[0]);
  }
  const std::int64_t normalizer = loss.attrs.get_int("normalizer");

  GradientEmitter emitter(graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeId& id = *it;
    if (!active(id)) continue;
    const Node node = graph.node(id);
    if (node.kind == OpKind::kVariable) continue;

    if (id == spec.loss_node) {
      Node grad = make_node(id + "/grad", OpKind::kGradSoftmaxXent, node.inputs,
                            node.device);
      grad.attrs.set("normalizer", normalizer);
      if (active(node.inputs[0].node)) {
        emitter.contribute(node.inputs[0].node, emitter.emit(std::move(grad)));
      }
      continue;
    }

    const auto dy = emitter.gradient_of(id);
    if (!dy) continue;
    const auto& in = node.inputs;
    switch (node.kind) {
      case OpKind::kMatMul:
      case OpKind::kConv2D: {
        const bool conv = node.kind == OpKind::kConv2D;
        if (active(in[1].node)) {
          Node grad_w = make_node(id + "/grad_w",
                                  conv ? OpKind::kGradConv2DW : OpKind::kGradMatMulW,
                                  {in[0], *dy}, node.device);
          grad_w.attrs.set("forward", id);
          if (conv) grad_w.attrs.set("kernel", graph.shape_of(in[1]).dims[0]);
          emitter.contribute(in[1].node, emitter.emit(std::move(grad_w)));
        }
        if (active(in[0].node)) {
          std::vector<TensorRef> grad_inputs{*dy, in[1]};
          if (!conv) grad_inputs.push_back(in[0]);
          Node grad_x = make_node(id + "/grad_x",
                                  conv ? OpKind::kGradConv2DX : OpKind::kGradMatMulX,
                                  std::move(grad_inputs), node.device);
          grad_x.attrs.set("forward", id);
          emitter.contribute(in[0].node, emitter.emit(std::move(grad_x)));
        }
        break;
      }
      case OpKind::kBiasAdd:
        if (active(in[1].node)) {
          emitter.contribute(in[1].node,
                             emitter.emit(make_node(id + "/grad_b", OpKind::kGradBias,
                                                    {*dy}, node.device)));
        }
        if (active(in[0].node)) emitter.contribute(in[0].node, *dy);
        break;
      case OpKind::kReLU:
        emitter.contribute(in[0].node,
                           emitter.emit(make_node(id + "/grad", OpKind::kGradReLU,
                                                  {*dy, in[0]}, node.device)));
        break;
      case OpKind::kAddN:
        for (const auto& ref : in) {
          if (active(ref.node)) emitter.contribute(ref.node, *dy);
        }
        break;
      default:
        throw Error(ErrorCode::kNonDifferentiable,
                    "node '" + id + "' has no gradient rule");
    }
  }

  std::vector<NodeId> outputs{spec.loss_node};
  for (const auto& v : spec.variables) {
    const auto grad = emitter.gradient_of(v);
    if (!grad) {
      throw Error(ErrorCode::kUnreachableVariable,
                  "variable '" + v + "' received no gradient");
    }
    Node update = make_node(v + "/update", OpKind::kSgdUpdate, {{v, 0}, *grad},
                            graph.node(v).device);
    update.attrs.set("learning_rate", spec.learning_rate);
    emitter.emit(std::move(update));
    outputs.push_back(v + "/update");
  }
  graph.set_outputs(std::move(outputs));
  return infer_shapes(graph);
}

}  // namespace wap
