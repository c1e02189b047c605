// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "support/test_support.hpp"
#include "wap/graph_io.hpp"
#include "wap/nn_parser.hpp"

namespace wap {
namespace {

using testing::conv_fwd_flops;
using testing::dense_fwd_flops;

Graph single_matmul(std::int64_t b, std::int64_t i, std::int64_t o) {
  Graph g("mm");
  Node x;
  x.id = "x";
  x.attrs.set("shape", std::vector<std::int64_t>{b, i});
  x.attrs.set("batch_axis", std::int64_t{0});
  g.add_node(x);
  Node w;
  w.id = "w";
  w.kind = OpKind::kVariable;
  w.attrs.set("shape", std::vector<std::int64_t>{i, o});
  g.add_node(w);
  Node mm;
  mm.id = "mm";
  mm.kind = OpKind::kMatMul;
  mm.inputs = {{"x", 0}, {"w", 0}};
  g.add_node(mm);
  g.set_outputs({"mm"});
  return infer_shapes(g);
}

TEST(FlopsOf, MatMulRule) {
  const auto unit = flops_of(single_matmul(1, 1, 1), "mm");
  EXPECT_EQ(unit.fwd, 2);
  EXPECT_EQ(unit.bwd, 4);
  const Graph g = single_matmul(128, 784, 10);
  EXPECT_EQ(flops_of(g, "mm").fwd, 2007040);
  const auto w = extract_workloads(g);
  ASSERT_EQ(w.layers.size(), 1u);
  EXPECT_EQ(w.layers[0].weight_bytes, 31360);
  EXPECT_EQ(w.layers[0].batch, 128);
  EXPECT_EQ(w.global_batch, 128);
}

TEST(FlopsOf, ConvRuleAndUnsupportedKinds) {
  ModelSpec spec;
  spec.input_dims = {4, 4, 1};
  spec.layers = {{LayerSpec::Kind::kConv, 1, 3}, {LayerSpec::Kind::kDense, 2}};
  const Graph g = infer_shapes(build_model(spec, 2));
  EXPECT_EQ(flops_of(g, "conv1").fwd, 576);
  EXPECT_EQ(flops_of(g, "conv1").bwd, 1152);
  try {
    flops_of(g, "conv1/relu");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedKind);
  }
}

TEST(ExtractWorkloads, AlexNetLikeMatchesHandCount) {
  const std::int64_t b = 512;
  const Graph g = infer_shapes(build_model(alexnet_like_spec(), b));
  // 6x6 "same" convolutions, then 6*6*4 = 144 flattened features.
  const std::vector<std::int64_t> fwd{
      conv_fwd_flops(b, 6, 3, 4, 5), conv_fwd_flops(b, 6, 4, 8, 3),
      conv_fwd_flops(b, 6, 8, 8, 3), conv_fwd_flops(b, 6, 8, 8, 3),
      conv_fwd_flops(b, 6, 8, 4, 3), dense_fwd_flops(b, 144, 128),
      dense_fwd_flops(b, 128, 128), dense_fwd_flops(b, 128, 10)};
  const std::vector<std::int64_t> params{5 * 5 * 3 * 4 + 4, 9 * 4 * 8 + 8, 9 * 8 * 8 + 8,
                                         9 * 8 * 8 + 8,     9 * 8 * 4 + 4, 144 * 128 + 128,
                                         128 * 128 + 128,   128 * 10 + 10};
  std::int64_t hand_total = 0, hand_bytes = 0;
  for (auto f : fwd) hand_total += 3 * f;
  for (auto p : params) hand_bytes += 4 * p;

  const auto w = extract_workloads(g);
  ASSERT_EQ(w.layers.size(), 8u);
  const double rel = std::abs(static_cast<double>(w.total_flops() - hand_total)) /
                     static_cast<double>(hand_total);
  EXPECT_LT(rel, 0.01);
  EXPECT_EQ(w.total_flops(), hand_total);
  EXPECT_EQ(w.total_weight_bytes, hand_bytes);
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    EXPECT_EQ(w.layers[i].flops_fwd, fwd[i]) << w.layers[i].layer;
    EXPECT_EQ(w.layers[i].weight_bytes, 4 * params[i]) << w.layers[i].layer;
  }
  EXPECT_EQ(w.layers.front().layer, "conv1");
  EXPECT_EQ(w.layers.back().layer, "fc3");
  EXPECT_EQ(w.unattached_weight_bytes, 0);
}

TEST(ExtractWorkloads, LinearInBatch) {
  const auto big = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 64)));
  const auto small = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 32)));
  ASSERT_EQ(big.layers.size(), small.layers.size());
  for (std::size_t i = 0; i < big.layers.size(); ++i) {
    EXPECT_EQ(big.layers[i].flops_fwd, 2 * small.layers[i].flops_fwd);
    EXPECT_EQ(big.layers[i].weight_bytes, small.layers[i].weight_bytes);
  }
}

TEST(ExtractWorkloads, InvariantUnderRoundTripAndDevices) {
  const Graph g = infer_shapes(build_model(mlp_spec({8, 4}, 6), 16));
  Graph placed = deserialize(serialize(g));
  for (const auto& [id, node] : g.nodes()) placed.mutable_node(id).device = 0;
  const auto a = workload_to_json(extract_workloads(g));
  EXPECT_EQ(a, workload_to_json(extract_workloads(infer_shapes(placed))));
}

TEST(ExtractWorkloads, ElementwiseOnlyGraph) {
  Graph g("bias_only");
  Node x;
  x.id = "x";
  x.attrs.set("shape", std::vector<std::int64_t>{4, 3});
  x.attrs.set("batch_axis", std::int64_t{0});
  g.add_node(x);
  Node b;
  b.id = "b";
  b.kind = OpKind::kVariable;
  b.attrs.set("shape", std::vector<std::int64_t>{3});
  g.add_node(b);
  Node add;
  add.id = "add";
  add.kind = OpKind::kBiasAdd;
  add.inputs = {{"x", 0}, {"b", 0}};
  g.add_node(add);
  g.set_outputs({"add"});
  const auto w = extract_workloads(infer_shapes(g));
  EXPECT_TRUE(w.layers.empty());
  EXPECT_EQ(w.total_weight_bytes, 12);
  EXPECT_EQ(w.unattached_weight_bytes, 12);
}

TEST(ExtractWorkloads, RequiresShapes) {
  Graph g = single_matmul(2, 2, 2);
  Graph unshaped("u");
  for (const auto& [id, node] : g.nodes()) {
    Node copy = node;
    copy.output_shape.reset();
    unshaped.add_node(copy);
  }
  unshaped.set_outputs(g.outputs());
  try {
    extract_workloads(unshaped);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnshapedGraph);
  }
}

}  // namespace
}  // namespace wap
