// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Sequential model descriptions and the benchmark networks shipped in
// data/graphs. The benchmarks are scaled-down AlexNet/VGG shapes (same layer
// structure, small images and channel counts) so that the interpreter can
// verify a rewrite at full benchmark batch in well under a second.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wap/graph_ir.hpp"

namespace wap {

struct LayerSpec {
  enum class Kind { kDense, kConv };
  Kind kind = Kind::kDense;
  std::int64_t width = 0;  // output features or channels
  std::int64_t kernel = 3;  // conv only
  bool bias = true;
  bool relu = true;
};

struct ModelSpec {
  std::string name;
  /// Per-sample input dims: {features} or {H, W, C}.
  std::vector<std::int64_t> input_dims;
  std::vector<LayerSpec> layers;  // the last one must be dense
  double learning_rate = 0.1;
};

/// Single-device training graph: Input "x", "labels", layers named
/// "<kind><i>" with weights "<layer>/w" and biases "<layer>/b", loss "loss".
/// The final layer's width is the number of classes and has no ReLU.
Graph build_model(const ModelSpec& spec, std::int64_t batch);

ModelSpec mlp_spec(std::vector<std::int64_t> widths, std::int64_t in_features);
/// 5 conv + 3 dense layers.
ModelSpec alexnet_like_spec();
/// 13 conv + 3 dense layers.
ModelSpec vgg_like_spec();

}  // namespace wap
