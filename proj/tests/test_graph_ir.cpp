// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "wap/graph_io.hpp"
#include "wap/graph_ir.hpp"
#include "wap/models.hpp"

namespace wap {
namespace {

Node make(NodeId id, OpKind kind, std::vector<TensorRef> inputs = {}) {
  Node n;
  n.id = std::move(id);
  n.kind = kind;
  n.inputs = std::move(inputs);
  return n;
}

Node input(NodeId id, std::vector<std::int64_t> shape, bool batched = true) {
  Node n = make(std::move(id), OpKind::kInput);
  n.attrs.set("shape", std::move(shape));
  if (batched) n.attrs.set("batch_axis", std::int64_t{0});
  return n;
}

Node variable(NodeId id, std::vector<std::int64_t> shape) {
  Node n = make(std::move(id), OpKind::kVariable);
  n.attrs.set("shape", std::move(shape));
  return n;
}

Graph tiny_matmul() {
  Graph g("tiny");
  g.add_node(input("x", {4, 3}));
  g.add_node(variable("w", {3, 5}));
  g.add_node(make("y", OpKind::kMatMul, {{"x", 0}, {"w", 0}}));
  g.set_outputs({"y"});
  return g;
}

TEST(TensorShape, BatchAndElements) {
  TensorShape s{{8, 4, 4, 3}, 0};
  EXPECT_EQ(s.num_elements(), 384);
  EXPECT_EQ(s.batch(), 8);
  EXPECT_EQ(TensorShape({{3, 5}, std::nullopt}).batch(), 0);
}

TEST(TensorRef, ParsesPorts) {
  EXPECT_EQ(TensorRef::parse("a/split:3"), (TensorRef{"a/split", 3}));
  EXPECT_EQ(TensorRef::parse("plain"), (TensorRef{"plain", 0}));
  EXPECT_EQ((TensorRef{"s", 2}).str(), "s:2");
}

TEST(OpKind, RoundTripsNames) {
  for (int k = 0; k <= static_cast<int>(OpKind::kSgdUpdate); ++k) {
    const auto kind = static_cast<OpKind>(k);
    EXPECT_EQ(parse_op_kind(to_string(kind)), kind);
  }
  EXPECT_FALSE(parse_op_kind("FancyOp").has_value());
  EXPECT_TRUE(is_primary(OpKind::kMatMul));
  EXPECT_TRUE(is_primary(OpKind::kConv2D));
  EXPECT_FALSE(is_primary(OpKind::kBiasAdd));
}

TEST(Graph, DuplicateIdThrows) {
  Graph g = tiny_matmul();
  EXPECT_THROW(g.add_node(input("x", {1})), Error);
}

TEST(InferShapes, MatMulAndFlatten) {
  const Graph g = infer_shapes(tiny_matmul());
  EXPECT_EQ(g.node("y").output_shape->dims, (std::vector<std::int64_t>{4, 5}));
  EXPECT_EQ(g.node("y").output_shape->batch_axis, 0u);

  Graph conv("conv");
  conv.add_node(input("x", {2, 4, 4, 3}));
  conv.add_node(variable("k", {3, 3, 3, 6}));
  conv.add_node(make("c", OpKind::kConv2D, {{"x", 0}, {"k", 0}}));
  conv.add_node(variable("w", {96, 10}));
  conv.add_node(make("fc", OpKind::kMatMul, {{"c", 0}, {"w", 0}}));
  conv.set_outputs({"fc"});
  const Graph shaped = infer_shapes(conv);
  EXPECT_EQ(shaped.node("c").output_shape->dims, (std::vector<std::int64_t>{2, 4, 4, 6}));
  EXPECT_EQ(shaped.node("fc").output_shape->dims, (std::vector<std::int64_t>{2, 10}));
}

TEST(InferShapes, MismatchNamesNodeAndShapes) {
  Graph g = tiny_matmul();
  g.mutable_node("w").attrs.set("shape", std::vector<std::int64_t>{4, 5});
  try {
    infer_shapes(g);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
    const std::string what = e.what();
    EXPECT_NE(what.find("'y'"), std::string::npos) << what;
    EXPECT_NE(what.find("[B4, 3]"), std::string::npos) << what;
  }
}

TEST(InferShapes, SplitAndConcat) {
  Graph g("sc");
  g.add_node(input("x", {8, 3}));
  Node split = make("s", OpKind::kSplit, {{"x", 0}});
  split.attrs.set("axis", std::int64_t{0});
  split.attrs.set("parts", std::int64_t{4});
  g.add_node(split);
  Node concat = make("c", OpKind::kConcat, {{"s", 0}, {"s", 1}, {"s", 2}, {"s", 3}});
  concat.attrs.set("axis", std::int64_t{0});
  g.add_node(concat);
  g.set_outputs({"c"});
  const Graph shaped = infer_shapes(g);
  EXPECT_EQ(shaped.node("s").output_shape->dims, (std::vector<std::int64_t>{2, 3}));
  EXPECT_EQ(shaped.node("c").output_shape->dims, (std::vector<std::int64_t>{8, 3}));

  g.mutable_node("s").attrs.set("parts", std::int64_t{3});
  EXPECT_TRUE(validate(g).has_rule("bad port") || validate(g).has_rule("shape"));
}

TEST(Validate, ReportsEachRule) {
  Graph g = tiny_matmul();
  g.add_node(make("orphan", OpKind::kReLU, {{"missing", 0}}));
  g.add_node(make("bad_arity", OpKind::kMatMul, {{"x", 0}}));
  Node upd = make("upd", OpKind::kSgdUpdate, {{"x", 0}, {"x", 0}});
  upd.attrs.set("learning_rate", 0.1);
  g.add_node(upd);
  g.set_outputs({"y", "nowhere"});
  const ValidationReport r = validate(g);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.has_rule("unresolved input"));
  EXPECT_TRUE(r.has_rule("arity"));
  EXPECT_TRUE(r.has_rule("update target"));
  EXPECT_TRUE(r.has_rule("unknown output"));
}

TEST(Validate, DetectsCycleAndTopoOrderThrows) {
  Graph g("cyc");
  g.add_node(input("x", {2, 2}));
  g.add_node(make("a", OpKind::kAddN, {{"x", 0}, {"b", 0}}));
  g.add_node(make("b", OpKind::kReLU, {{"a", 0}}));
  g.add_node(make("tail", OpKind::kReLU, {{"b", 0}}));
  g.set_outputs({"tail"});
  EXPECT_TRUE(validate(g).has_rule("cycle detected"));
  try {
    topo_order(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCycle);
    const std::string what = e.what();
    EXPECT_NE(what.find("a"), std::string::npos);
    EXPECT_EQ(what.find("tail"), std::string::npos) << "only nodes on the cycle: " << what;
  }
}

TEST(Validate, MultipleUpdatesOfOneVariable) {
  Graph g = tiny_matmul();
  for (const char* id : {"u1", "u2"}) {
    Node u = make(id, OpKind::kSgdUpdate, {{"w", 0}, {"w", 0}});
    u.attrs.set("learning_rate", 0.1);
    g.add_node(u);
  }
  EXPECT_TRUE(validate(g).has_rule("multiple updates"));
}

TEST(TopoOrder, TiesBreakByIdAndIsStable) {
  const Graph g = build_model(mlp_spec({4, 3}, 5), 8);
  const auto a = topo_order(g);
  const auto b = topo_order(g);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.front(), "fc1/b");  // smallest id among sources
  std::map<NodeId, std::size_t> pos;
  for (std::size_t i = 0; i < a.size(); ++i) pos[a[i]] = i;
  for (const auto& [id, node] : g.nodes()) {
    for (const auto& in : node.inputs) EXPECT_LT(pos[in.node], pos[id]);
  }
}

TEST(GraphIo, RoundTripIsByteStable) {
  const Graph g = build_model(alexnet_like_spec(), 16);
  const std::string text = serialize(g);
  const Graph back = deserialize(text);
  EXPECT_TRUE(g.structurally_equal(back));
  EXPECT_EQ(serialize(back), text);
}

TEST(GraphIo, DiagnosticsNameTheField) {
  auto expect_error = [](const std::string& text, ErrorCode code, const std::string& needle) {
    try {
      deserialize(text);
      FAIL() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << e.what();
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error(R"({"version":1,"name":"g","nodes":[{"id":"a","kind":"FancyOp","inputs":[]}],"outputs":[]})",
               ErrorCode::kParse, "nodes[0].kind: unknown op kind 'FancyOp'");
  expect_error(R"({"version":7,"name":"g","nodes":[],"outputs":[]})",
               ErrorCode::kVersionMismatch, "version 7");
  expect_error(R"({"version":1,"name":"g","nodes":[],"outputs":[],"extra":1})",
               ErrorCode::kParse, "extra");
  expect_error("{\"version\":1,\n \"name\": }", ErrorCode::kParse, "line 2");
}

TEST(DeviceSet, RejectsDuplicates) {
  EXPECT_THROW(DeviceSet({0, 0}), Error);
  EXPECT_THROW(DeviceSet(std::vector<DeviceId>{}), Error);
  EXPECT_EQ(DeviceSet::first_n(3).prefix(2).ids(), (std::vector<DeviceId>{0, 1}));
}

}  // namespace
}  // namespace wap
