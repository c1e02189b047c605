// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/models.hpp"

#include <cmath>

#include "wap/train_builder.hpp"

namespace wap {

namespace {

class SequentialBuilder {
 public:
  explicit SequentialBuilder(std::string name) : graph_(std::move(name)) {}

  TensorRef input(const NodeId& id, std::vector<std::int64_t> dims, const std::string& data) {
    Node node;
    node.id = id;
    node.kind = OpKind::kInput;
    node.attrs.set("shape", dims);
    node.attrs.set("batch_axis", std::int64_t{0});
    node.attrs.set("data", data);
    return add(std::move(node));
  }

  TensorRef variable(const NodeId& id, std::vector<std::int64_t> dims, std::int64_t fan_in) {
    Node node;
    node.id = id;
    node.kind = OpKind::kVariable;
    node.attrs.set("shape", std::move(dims));
    node.attrs.set("init_scale", 1.0 / std::sqrt(static_cast<double>(fan_in)));
    variables_.push_back(id);
    return add(std::move(node));
  }

  TensorRef op(const NodeId& id, OpKind kind, std::vector<TensorRef> inputs) {
    Node node;
    node.id = id;
    node.kind = kind;
    node.inputs = std::move(inputs);
    return add(std::move(node));
  }

  Graph& graph() { return graph_; }
  const std::vector<NodeId>& variables() const { return variables_; }

 private:
  TensorRef add(Node node) { return {graph_.add_node(std::move(node)).id, 0}; }

  Graph graph_;
  std::vector<NodeId> variables_;
};

}  // namespace

Graph build_model(const ModelSpec& spec, std::int64_t batch) {
  if (spec.layers.empty() || spec.layers.back().kind != LayerSpec::Kind::kDense) {
    throw Error(ErrorCode::kPrecondition,
                "model '" + spec.name + "' must end with a dense layer");
  }
  SequentialBuilder b(spec.name);
  std::vector<std::int64_t> dims{batch};
  dims.insert(dims.end(), spec.input_dims.begin(), spec.input_dims.end());
  TensorRef x = b.input("x", dims, "features");
  const std::int64_t classes = spec.layers.back().width;
  const TensorRef labels = b.input("labels", {batch, classes}, "labels");

  std::int64_t features = 1;
  for (auto v : spec.input_dims) features *= v;
  std::int64_t channels = spec.input_dims.back();
  int conv_index = 0, dense_index = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const bool conv = layer.kind == LayerSpec::Kind::kConv;
    const NodeId name = conv ? "conv" + std::to_string(++conv_index)
                             : "fc" + std::to_string(++dense_index);
    if (conv) {
      if (dims.size() != 4) {
        throw Error(ErrorCode::kPrecondition,
                    "model '" + spec.name + "': conv layer after a dense layer");
      }
      const auto k = layer.kernel;
      const TensorRef w = b.variable(name + "/w", {k, k, channels, layer.width},
                                     k * k * channels);
      x = b.op(name, OpKind::kConv2D, {x, w});
      channels = layer.width;
      features = dims[1] * dims[2] * channels;
    } else {
      const TensorRef w = b.variable(name + "/w", {features, layer.width}, features);
      x = b.op(name, OpKind::kMatMul, {x, w});
      features = layer.width;
      dims.resize(2);
    }
    if (layer.bias) {
      const TensorRef bias = b.variable(name + "/b", {layer.width}, conv ? channels : features);
      b.graph().mutable_node(bias.node).attrs.set("init_scale", 0.01);
      x = b.op(name + "/bias", OpKind::kBiasAdd, {x, bias});
    }
    const bool last = i + 1 == spec.layers.size();
    if (layer.relu && !last) x = b.op(name + "/relu", OpKind::kReLU, {x});
  }
  b.op("loss", OpKind::kSoftmaxXentLoss, {x, labels});
  b.graph().set_outputs({"loss"});

  TrainingGraphSpec training;
  training.forward = b.graph();
  training.loss_node = "loss";
  training.learning_rate = spec.learning_rate;
  training.variables = b.variables();
  return build_training_graph(training);
}

ModelSpec mlp_spec(std::vector<std::int64_t> widths, std::int64_t in_features) {
  ModelSpec spec;
  spec.name = "mlp";
  spec.input_dims = {in_features};
  for (auto w : widths) spec.layers.push_back({LayerSpec::Kind::kDense, w});
  return spec;
}

ModelSpec alexnet_like_spec() {
  using K = LayerSpec::Kind;
  ModelSpec spec;
  spec.name = "alexnet_like";
  spec.input_dims = {6, 6, 3};
  spec.layers = {{K::kConv, 4, 5}, {K::kConv, 8, 3},    {K::kConv, 8, 3},
                 {K::kConv, 8, 3}, {K::kConv, 4, 3},    {K::kDense, 128},
                 {K::kDense, 128}, {K::kDense, 10}};
  spec.learning_rate = 0.05;
  return spec;
}

ModelSpec vgg_like_spec() {
  using K = LayerSpec::Kind;
  ModelSpec spec;
  spec.name = "vgg_like";
  spec.input_dims = {8, 8, 3};
  for (std::int64_t c : {4, 4, 8, 8, 8, 8, 8, 8, 8, 8, 8, 8, 8}) {
    spec.layers.push_back({K::kConv, c, 3});
  }
  spec.layers.push_back({K::kDense, 256});
  spec.layers.push_back({K::kDense, 256});
  spec.layers.push_back({K::kDense, 10});
  spec.learning_rate = 0.05;
  return spec;
}

}  // namespace wap
