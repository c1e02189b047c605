// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Dataflow-graph IR for single-step training graphs.
//
// Conventions:
//  * Activations are NHWC; Conv2D weights are [K, K, C_in, C_out], stride 1,
//    "same" zero padding, odd K.
//  * MatMul flattens every non-leading dim of its first input, so
//    [B, H, W, C] x [H*W*C, O] -> [B, O].
//  * A tensor without a batch axis (weights, weight gradients, the loss) is
//    never split; data parallelism splits along batch_axis only.
//  * Nodes with no device are host nodes (graph inputs and their splits, and
//    output fetches). Edges touching a host node are feeds/fetches and are not
//    device-to-device traffic.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wap/error.hpp"

namespace wap {

using NodeId = std::string;
using DeviceId = int;

struct TensorShape {
  std::vector<std::int64_t> dims;
  std::optional<std::size_t> batch_axis;

  std::int64_t num_elements() const;
  std::size_t rank() const { return dims.size(); }
  /// Size along the batch axis, or 0 when the tensor has none.
  std::int64_t batch() const;
  std::string str() const;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// A node output. Only Split has more than one output port.
struct TensorRef {
  NodeId node;
  int port = 0;

  std::string str() const;
  static TensorRef parse(std::string_view text);

  friend auto operator<=>(const TensorRef&, const TensorRef&) = default;
};

enum class OpKind {
  kInput,
  kVariable,
  kMatMul,
  kConv2D,
  kBiasAdd,
  kReLU,
  kSoftmaxXentLoss,
  kSplit,
  kConcat,
  kAllReduceSum,
  kGradMatMulW,
  kGradMatMulX,
  kGradConv2DW,
  kGradConv2DX,
  kGradBias,
  kGradReLU,
  kGradSoftmaxXent,
  kAddN,
  kSgdUpdate,
};

struct OpTraits {
  std::string_view name;
  int min_arity;
  int max_arity;  // -1: variadic
  bool primary;
  bool differentiable;
};

const OpTraits& traits(OpKind kind);
std::string_view to_string(OpKind kind);
std::optional<OpKind> parse_op_kind(std::string_view name);
inline bool is_primary(OpKind kind) { return traits(kind).primary; }
/// Backward kinds of a primary layer; they carry attr "forward".
bool is_primary_grad(OpKind kind);

using AttrValue =
    std::variant<std::int64_t, double, std::string, std::vector<std::int64_t>>;

enum class AttrType { kInt, kDouble, kString, kInts };

struct AttrSpec {
  std::string_view key;
  AttrType type;
  bool required;
};

/// The attribute keys a kind accepts; anything else is rejected.
const std::vector<AttrSpec>& attr_specs(OpKind kind);

class Attrs {
 public:
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, AttrValue value) {
    values_[key] = std::move(value);
  }
  void erase(const std::string& key) { values_.erase(key); }

  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  const std::vector<std::int64_t>& get_ints(const std::string& key) const;

  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::string get_string_or(const std::string& key,
                            const std::string& fallback) const;

  const std::map<std::string, AttrValue>& values() const { return values_; }

  friend bool operator==(const Attrs&, const Attrs&) = default;

 private:
  std::map<std::string, AttrValue> values_;
};

struct Node {
  NodeId id;
  OpKind kind = OpKind::kInput;
  std::vector<TensorRef> inputs;
  Attrs attrs;
  std::optional<DeviceId> device;
  std::optional<TensorShape> output_shape;

  bool is_host() const { return !device.has_value(); }
};

/// Ordered, duplicate-free, non-empty device list.
class DeviceSet {
 public:
  explicit DeviceSet(std::vector<DeviceId> ids);
  static DeviceSet first_n(int n);

  const std::vector<DeviceId>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  DeviceId operator[](std::size_t i) const { return ids_[i]; }
  DeviceSet prefix(std::size_t n) const;

  friend bool operator==(const DeviceSet&, const DeviceSet&) = default;

 private:
  std::vector<DeviceId> ids_;
};

class Graph {
 public:
  Graph() = default;
  explicit Graph(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  /// Throws kInvalidGraph on duplicate id.
  Node& add_node(Node node);
  void remove_node(const NodeId& id);
  bool has_node(const NodeId& id) const { return nodes_.count(id) != 0; }
  const Node& node(const NodeId& id) const;
  Node& mutable_node(const NodeId& id);
  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  const std::vector<NodeId>& outputs() const { return outputs_; }
  void set_outputs(std::vector<NodeId> outputs) { outputs_ = std::move(outputs); }

  /// Consumer node ids per producer id, each list ascending.
  std::map<NodeId, std::vector<NodeId>> consumers() const;
  const TensorShape& shape_of(const TensorRef& ref) const;

  /// Structural equality: name, nodes (id, kind, inputs, attrs, device), and
  /// outputs. Inferred shapes are derived data and not compared.
  bool structurally_equal(const Graph& other) const;

 private:
  std::string name_;
  std::map<NodeId, Node> nodes_;
  std::vector<NodeId> outputs_;
};

struct Finding {
  NodeId node;
  std::string rule;
  std::string detail;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  bool has_rule(std::string_view rule) const;
};

/// All findings for the Graph invariants; never throws.
ValidationReport validate(const Graph& graph);

/// Deterministic topological order, ties broken by ascending NodeId.
/// Throws kCycle naming the nodes left on a cycle.
std::vector<NodeId> topo_order(const Graph& graph);

/// Returns a copy with every output_shape populated. Throws kShapeMismatch
/// naming the node and the incompatible shapes.
Graph infer_shapes(const Graph& graph);

/// Output shape of one node given its input shapes (shape rules, no graph
/// walk). Exposed so rewrites can type new nodes locally.
TensorShape infer_node_shape(const Node& node,
                             const std::vector<TensorShape>& input_shapes);

}  // namespace wap
