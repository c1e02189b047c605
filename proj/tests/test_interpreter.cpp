// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support/test_support.hpp"
#include "wap/evaluator.hpp"
#include "wap/graph_modifier.hpp"

namespace wap {
namespace {

using testing::plan_of;

Node input(NodeId id, std::vector<std::int64_t> shape, std::optional<DeviceId> device = {}) {
  Node n;
  n.id = std::move(id);
  n.kind = OpKind::kInput;
  n.attrs.set("shape", std::move(shape));
  n.device = device;
  return n;
}

TensorValue vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return TensorValue(TensorShape{{n}, std::nullopt}, std::move(v));
}

TEST(Execute, InputToOutputIsIdentity) {
  Graph g("id");
  g.add_node(input("x", {3}));
  g.set_outputs({"x"});
  Bindings<double> in{{"x", vec({1.5, -2.0, 0.25})}};
  const auto r = execute<double>(infer_shapes(g), in, 1);
  EXPECT_EQ(r.outputs.at("x").values(), in.at("x").values());
}

TEST(Execute, AllReduceDeliversSumToEveryReplica) {
  Graph g("ar");
  g.add_node(input("a", {2}, 0));
  g.add_node(input("b", {2}, 1));
  Node ar;
  ar.id = "ar";
  ar.kind = OpKind::kAllReduceSum;
  ar.inputs = {{"a", 0}, {"b", 0}};
  g.add_node(ar);
  for (int k = 0; k < 2; ++k) {
    Node r;
    r.id = replica_id("out", k);
    r.kind = OpKind::kReLU;
    r.inputs = {{"ar", 0}};
    r.device = k;
    g.add_node(r);
  }
  g.set_outputs({"out/dev0", "out/dev1"});
  const auto r = execute<double>(infer_shapes(g), {{"a", vec({1, 2})}, {"b", vec({3, 4})}}, 1);
  for (const char* id : {"out/dev0", "out/dev1"}) {
    EXPECT_EQ(r.outputs.at(id).values(), (std::vector<double>{4, 6})) << id;
  }
}

TEST(Execute, MissingOrMisshapedInput) {
  const Graph g = build_model(mlp_spec({3}, 4), 4);
  auto inputs = generate_inputs(g, 1);
  auto bad = inputs;
  bad.erase("labels");
  try {
    execute<double>(g, bad, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingInput);
    EXPECT_NE(std::string(e.what()).find("labels"), std::string::npos);
  }
  bad = inputs;
  bad["x"] = vec({1, 2, 3});
  EXPECT_THROW(execute<double>(g, bad, 1), Error);
}

TEST(Execute, InputsAndVariablesAreDeterministic) {
  const Graph g = build_model(mlp_spec({3}, 4), 4);
  const auto a = generate_inputs(g, 9);
  const auto b = generate_inputs(g, 9);
  EXPECT_EQ(a.at("x").values(), b.at("x").values());
  EXPECT_NE(a.at("x").values(), generate_inputs(g, 10).at("x").values());
  // Labels are one-hot rows.
  const auto& labels = a.at("labels");
  for (std::int64_t row = 0; row < 4; ++row) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < 3; ++c) sum += labels[static_cast<std::size_t>(row * 3 + c)];
    EXPECT_EQ(sum, 1.0);
  }
  // Replicas start from the same value as the original variable.
  Node replica = g.node("fc1/w");
  replica.id = replica_id("fc1/w", 3);
  EXPECT_EQ(initial_variable_value(replica, 9).values(),
            initial_variable_value(g.node("fc1/w"), 9).values());
  const TensorValue init = initial_variable_value(g.node("fc1/w"), 9);
  for (double v : init.values()) {
    EXPECT_LE(std::abs(v), 1.0 / std::sqrt(4.0));
  }
}

TEST(Compare, GraphAgainstItself) {
  const Graph g = build_model(mlp_spec({5, 3}, 4), 8);
  const auto report = compare(g, g, generate_inputs(g, 42), 42, 1e-6);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.max_relative_deviation, 0.0);
  EXPECT_EQ(report.outputs.size(), g.outputs().size());
}

TEST(Compare, TwoLayerMlpOneStepAtEachRewriteStage) {
  const Graph g = build_model(mlp_spec({5, 3}, 4), 8);
  const auto inputs = generate_inputs(g, 42);
  for (auto step : {TransformStep::kStep1, TransformStep::kStep2, TransformStep::kStep3}) {
    const Graph t = transform(g, plan_of(2), step).graph;
    const auto report = compare(g, t, inputs, 42, 1e-6);
    EXPECT_TRUE(report.passed()) << to_string(step) << " " << report.first_failure();
    EXPECT_LT(report.max_relative_deviation, 1e-12);
  }
}

TEST(Compare, ReplicatedUpdatesMatchSingleDeviceUpdate) {
  const Graph g = build_model(mlp_spec({5, 3}, 4), 8);
  const Graph t = transform(g, plan_of(4)).graph;
  const auto inputs = generate_inputs(g, 42);
  const auto single = execute<double>(g, inputs, 42);
  const auto multi = execute<double>(t, inputs, 42);
  const auto& expected = single.outputs.at("fc2/w/update").values();
  for (int k = 0; k < 4; ++k) {
    const auto& got = multi.outputs.at(replica_id("fc2/w/update", k)).values();
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got[i], expected[i], 1e-12 * (1.0 + std::abs(expected[i])));
    }
  }
  EXPECT_NEAR(multi.outputs.at("loss")[0], single.outputs.at("loss")[0], 1e-12);
}

TEST(Compare, DroppedGradientEdgeIsCaught) {
  const Graph g = build_model(mlp_spec({5, 3}, 4), 8);
  Graph t = transform(g, plan_of(2)).graph;
  NodeId target;
  for (const auto& [id, node] : t.nodes()) {
    if (node.kind == OpKind::kAllReduceSum && base_id(node.inputs[0].node) == "fc1/grad_w") {
      target = id;
    }
  }
  ASSERT_FALSE(target.empty());
  t.mutable_node(target).inputs.pop_back();
  const auto report = compare(g, t, generate_inputs(g, 42), 42, 1e-6);
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(base_id(report.first_failure()), "fc1/w/update");
  const auto j = equivalence_to_json(report);
  EXPECT_FALSE(j.at("passed").get<bool>());
}

TEST(Compare, DifferentOutputSetsAreAnError) {
  const Graph g = build_model(mlp_spec({3}, 4), 4);
  Graph h = g;
  h.set_outputs({"loss"});
  try {
    compare(g, h, generate_inputs(g, 1), 1, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutputMismatch);
  }
}

TEST(Execute, NonFiniteValuesAreDiagnosed) {
  const Graph g = build_model(mlp_spec({3}, 4), 4);
  ExecutionOptions<double> opts;
  TensorValue w = initial_variable_value(g.node("fc1/w"), 1);
  w[0] = std::numeric_limits<double>::infinity();
  opts.variable_overrides.emplace("fc1/w", w);
  const auto r = execute<double>(g, generate_inputs(g, 1), 1, opts);
  ASSERT_FALSE(r.diagnostics.empty());
  EXPECT_NE(r.diagnostics.front().find("fc1"), std::string::npos) << r.diagnostics.front();
}

TEST(Execute, FloatTracksDouble) {
  const Graph g = build_model(alexnet_like_spec(), 4);
  const auto inputs = generate_inputs(g, 3);
  Bindings<float> single;
  for (const auto& [id, t] : inputs) {
    std::vector<float> v(t.values().begin(), t.values().end());
    single.emplace(id, Tensor<float>(t.shape(), std::move(v)));
  }
  const double ld = execute<double>(g, inputs, 3).outputs.at("loss")[0];
  const double lf = execute<float>(g, single, 3).outputs.at("loss")[0];
  EXPECT_NEAR(lf, ld, 1e-4 * std::abs(ld));
}

}  // namespace
}  // namespace wap
