// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "support/test_support.hpp"
#include "wap/train_builder.hpp"

namespace wap {
namespace {

TEST(TrainBuilder, NamesAndOutputs) {
  const Graph g = build_model(mlp_spec({4, 3}, 5), 8);
  for (const char* id : {"fc1/grad_w", "fc2/grad_w", "fc2/grad_x", "fc2/bias/grad_b",
                         "loss/grad", "fc1/relu/grad", "fc1/w/update", "fc2/b/update"}) {
    EXPECT_TRUE(g.has_node(id)) << id;
  }
  // No gradient flows into the input features.
  EXPECT_FALSE(g.has_node("fc1/grad_x"));
  EXPECT_EQ(g.outputs().front(), "loss");
  EXPECT_EQ(g.outputs().size(), 5u);
  EXPECT_EQ(g.node("loss").attrs.get_int("normalizer"), 8);
  EXPECT_EQ(g.node("fc2/grad_x").attrs.get_string("forward"), "fc2");
  EXPECT_TRUE(validate(g).ok());
}

TEST(TrainBuilder, SgdRuleIsExact) {
  const Graph g = build_model(mlp_spec({3}, 4), 4);
  const auto inputs = generate_inputs(g, 7);
  ExecutionOptions<double> all;
  all.keep_all = true;
  const auto r = execute<double>(g, inputs, 7, all);
  const double lr = g.node("fc1/w/update").attrs.get_double("learning_rate");
  const auto& w = r.values.at("fc1/w");
  const auto& grad = r.values.at(g.node("fc1/w/update").inputs[1].str());
  const auto& updated = r.outputs.at("fc1/w/update");
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(updated[i], w[i] - lr * grad[i]);
}

TEST(TrainBuilder, GradientsMatchFiniteDifferencesMlp) {
  const auto check = testing::check_gradients(build_model(mlp_spec({6, 4}, 5), 8), 3, 1e-5);
  EXPECT_GT(check.checked, 50);
  EXPECT_LT(check.max_relative_error, 1e-4) << check.worst;
}

TEST(TrainBuilder, GradientsMatchFiniteDifferencesConv) {
  ModelSpec spec;
  spec.name = "conv";
  spec.input_dims = {4, 4, 2};
  spec.layers = {{LayerSpec::Kind::kConv, 3, 3}, {LayerSpec::Kind::kConv, 2, 1},
                 {LayerSpec::Kind::kDense, 3}};
  const auto check = testing::check_gradients(build_model(spec, 4), 11, 1e-5);
  EXPECT_GT(check.checked, 50);
  EXPECT_LT(check.max_relative_error, 1e-4) << check.worst;
  EXPECT_LT(check.skipped_kinks, check.checked / 10);
}

TEST(TrainBuilder, FanOutAccumulatesWithAddN) {
  // x -> matmul(w) -> h; loss on relu(h) + h (h used twice).
  Graph f("fanout");
  Node x;
  x.id = "x";
  x.attrs.set("shape", std::vector<std::int64_t>{4, 3});
  x.attrs.set("batch_axis", std::int64_t{0});
  f.add_node(x);
  Node labels = x;
  labels.id = "labels";
  labels.attrs.set("shape", std::vector<std::int64_t>{4, 2});
  labels.attrs.set("data", std::string("labels"));
  f.add_node(labels);
  Node w;
  w.id = "w";
  w.kind = OpKind::kVariable;
  w.attrs.set("shape", std::vector<std::int64_t>{3, 2});
  f.add_node(w);
  auto op = [&](NodeId id, OpKind kind, std::vector<TensorRef> in) {
    Node n;
    n.id = std::move(id);
    n.kind = kind;
    n.inputs = std::move(in);
    f.add_node(n);
  };
  op("h", OpKind::kMatMul, {{"x", 0}, {"w", 0}});
  op("r", OpKind::kReLU, {{"h", 0}});
  op("s", OpKind::kAddN, {{"r", 0}, {"h", 0}});
  op("loss", OpKind::kSoftmaxXentLoss, {{"s", 0}, {"labels", 0}});
  f.set_outputs({"loss"});
  const Graph g = build_training_graph({f, "loss", 0.1, {"w"}});
  ASSERT_TRUE(g.has_node("h/grad_sum"));
  EXPECT_EQ(g.node("h/grad_sum").attrs.get_string("role"), "sum");
  const auto check = testing::check_gradients(g, 5, 1e-5);
  EXPECT_LT(check.max_relative_error, 1e-4) << check.worst;
}

TEST(TrainBuilder, RejectsUnreachableVariable) {
  Graph f = build_model(mlp_spec({3}, 4), 4);
  // Rebuild a forward-only graph with an extra, unused variable.
  Graph forward("fwd");
  for (const auto& [id, node] : f.nodes()) {
    if (node.kind == OpKind::kSgdUpdate || id.find("/grad") != std::string::npos) continue;
    Node copy = node;
    copy.output_shape.reset();
    forward.add_node(copy);
  }
  Node extra;
  extra.id = "unused";
  extra.kind = OpKind::kVariable;
  extra.attrs.set("shape", std::vector<std::int64_t>{2});
  forward.add_node(extra);
  forward.set_outputs({"loss"});
  try {
    build_training_graph({forward, "loss", 0.1, {"fc1/w", "unused"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnreachableVariable);
    EXPECT_NE(std::string(e.what()).find("unused"), std::string::npos);
  }
}

TEST(TrainBuilder, RejectsNonDifferentiablePath) {
  Graph f("nd");
  Node x;
  x.id = "x";
  x.attrs.set("shape", std::vector<std::int64_t>{4, 3});
  x.attrs.set("batch_axis", std::int64_t{0});
  f.add_node(x);
  Node labels = x;
  labels.id = "labels";
  labels.attrs.set("data", std::string("labels"));
  f.add_node(labels);
  Node w;
  w.id = "w";
  w.kind = OpKind::kVariable;
  w.attrs.set("shape", std::vector<std::int64_t>{3, 3});
  f.add_node(w);
  Node h;
  h.id = "h";
  h.kind = OpKind::kMatMul;
  h.inputs = {{"x", 0}, {"w", 0}};
  f.add_node(h);
  Node split;
  split.id = "sp";
  split.kind = OpKind::kSplit;
  split.inputs = {{"h", 0}};
  split.attrs.set("axis", std::int64_t{0});
  split.attrs.set("parts", std::int64_t{2});
  f.add_node(split);
  Node concat;
  concat.id = "cat";
  concat.kind = OpKind::kConcat;
  concat.inputs = {{"sp", 0}, {"sp", 1}};
  concat.attrs.set("axis", std::int64_t{0});
  f.add_node(concat);
  Node loss;
  loss.id = "loss";
  loss.kind = OpKind::kSoftmaxXentLoss;
  loss.inputs = {{"cat", 0}, {"labels", 0}};
  f.add_node(loss);
  f.set_outputs({"loss"});
  try {
    build_training_graph({f, "loss", 0.1, {"w"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonDifferentiable) << e.what();
    EXPECT_NE(std::string(e.what()).find("'sp'"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace wap
