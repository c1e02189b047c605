// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/graph_ir.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <queue>
#include <sstream>

namespace wap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kInvalidGraph: return "invalid graph";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kCycle: return "cycle";
    case ErrorCode::kNonDifferentiable: return "non-differentiable op";
    case ErrorCode::kUnreachableVariable: return "unreachable variable";
    case ErrorCode::kUnshapedGraph: return "unshaped graph";
    case ErrorCode::kUnsupportedKind: return "unsupported kind";
    case ErrorCode::kNondivisibleBatch: return "nondivisible batch";
    case ErrorCode::kAlreadyParallelized: return "already parallelized";
    case ErrorCode::kMalformedPair: return "malformed split/concat pair";
    case ErrorCode::kMissingAggregation: return "missing aggregation";
    case ErrorCode::kMissingInput: return "missing input";
    case ErrorCode::kOutputMismatch: return "output mismatch";
    case ErrorCode::kUnassignedDevice: return "unassigned device";
    case ErrorCode::kPrecondition: return "precondition violation";
    case ErrorCode::kIo: return "i/o error";
  }
  return "error";
}

// ---------------------------------------------------------------------------
// TensorShape / TensorRef

std::int64_t TensorShape::num_elements() const {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::int64_t TensorShape::batch() const {
  return batch_axis ? dims[*batch_axis] : 0;
}

std::string TensorShape::str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << ", ";
    if (batch_axis && *batch_axis == i) out << 'B';
    out << dims[i];
  }
  out << ']';
  return out.str();
}

std::string TensorRef::str() const {
  return port == 0 ? node : node + ":" + std::to_string(port);
}

TensorRef TensorRef::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) return {std::string(text), 0};
  const auto digits = text.substr(colon + 1);
  if (digits.empty() ||
      !std::all_of(digits.begin(), digits.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return {std::string(text), 0};
  }
  return {std::string(text.substr(0, colon)), std::stoi(std::string(digits))};
}

// ---------------------------------------------------------------------------
// Op kinds

namespace {

constexpr int kVariadic = -1;

// Indexed by OpKind.
constexpr std::array<OpTraits, 19> kTraits{{
    {"Input", 0, 0, false, true},
    {"Variable", 0, 0, false, true},
    {"MatMul", 2, 2, true, true},
    {"Conv2D", 2, 2, true, true},
    {"BiasAdd", 2, 2, false, true},
    {"ReLU", 1, 1, false, true},
    {"SoftmaxXentLoss", 2, 2, false, true},
    {"Split", 1, 1, false, false},
    {"Concat", 2, kVariadic, false, false},
    {"AllReduceSum", 2, kVariadic, false, false},
    {"GradMatMulW", 2, 2, false, false},
    {"GradMatMulX", 3, 3, false, false},
    {"GradConv2DW", 2, 2, false, false},
    {"GradConv2DX", 2, 2, false, false},
    {"GradBias", 1, 1, false, false},
    {"GradReLU", 2, 2, false, false},
    {"GradSoftmaxXent", 2, 2, false, false},
    {"AddN", 1, kVariadic, false, true},
    {"SgdUpdate", 2, 2, false, false},
}};

}  // namespace

const OpTraits& traits(OpKind kind) {
  return kTraits[static_cast<std::size_t>(kind)];
}

std::string_view to_string(OpKind kind) { return traits(kind).name; }

std::optional<OpKind> parse_op_kind(std::string_view name) {
  for (std::size_t i = 0; i < kTraits.size(); ++i) {
    if (kTraits[i].name == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

bool is_primary_grad(OpKind kind) {
  return kind == OpKind::kGradMatMulW || kind == OpKind::kGradMatMulX ||
         kind == OpKind::kGradConv2DW || kind == OpKind::kGradConv2DX;
}

const std::vector<AttrSpec>& attr_specs(OpKind kind) {
  using T = AttrType;
  static const std::vector<AttrSpec> kNone;
  static const std::vector<AttrSpec> kInput{{"shape", T::kInts, true},
                                            {"batch_axis", T::kInt, false},
                                            {"data", T::kString, false}};
  static const std::vector<AttrSpec> kVariable{
      {"shape", T::kInts, true}, {"init_scale", T::kDouble, false}};
  static const std::vector<AttrSpec> kLoss{{"normalizer", T::kInt, false}};
  static const std::vector<AttrSpec> kSplit{{"axis", T::kInt, true},
                                            {"parts", T::kInt, true}};
  static const std::vector<AttrSpec> kConcat{{"axis", T::kInt, true}};
  static const std::vector<AttrSpec> kForward{{"forward", T::kString, true}};
  static const std::vector<AttrSpec> kGradConvW{{"forward", T::kString, true},
                                                {"kernel", T::kInt, true}};
  static const std::vector<AttrSpec> kAddN{{"role", T::kString, false}};
  static const std::vector<AttrSpec> kSgd{{"learning_rate", T::kDouble, true}};
  switch (kind) {
    case OpKind::kInput: return kInput;
    case OpKind::kVariable: return kVariable;
    case OpKind::kSoftmaxXentLoss:
    case OpKind::kGradSoftmaxXent: return kLoss;
    case OpKind::kSplit: return kSplit;
    case OpKind::kConcat: return kConcat;
    case OpKind::kGradMatMulW:
    case OpKind::kGradMatMulX:
    case OpKind::kGradConv2DX: return kForward;
    case OpKind::kGradConv2DW: return kGradConvW;
    case OpKind::kAddN: return kAddN;
    case OpKind::kSgdUpdate: return kSgd;
    default: return kNone;
  }
}

// ---------------------------------------------------------------------------
// Attrs

namespace {

template <typename T>
const T& attr_as(const std::map<std::string, AttrValue>& values,
                 const std::string& key) {
  const auto it = values.find(key);
  if (it == values.end()) {
    throw Error(ErrorCode::kInvalidGraph, "missing attribute '" + key + "'");
  }
  const T* value = std::get_if<T>(&it->second);
  if (!value) {
    throw Error(ErrorCode::kInvalidGraph,
                "attribute '" + key + "' has the wrong type");
  }
  return *value;
}

}  // namespace

std::int64_t Attrs::get_int(const std::string& key) const {
  return attr_as<std::int64_t>(values_, key);
}
double Attrs::get_double(const std::string& key) const {
  return attr_as<double>(values_, key);
}
const std::string& Attrs::get_string(const std::string& key) const {
  return attr_as<std::string>(values_, key);
}
const std::vector<std::int64_t>& Attrs::get_ints(const std::string& key) const {
  return attr_as<std::vector<std::int64_t>>(values_, key);
}
std::int64_t Attrs::get_int_or(const std::string& key,
                               std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}
double Attrs::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
std::string Attrs::get_string_or(const std::string& key,
                                 const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

// ---------------------------------------------------------------------------
// DeviceSet

DeviceSet::DeviceSet(std::vector<DeviceId> ids) : ids_(std::move(ids)) {
  if (ids_.empty()) {
    throw Error(ErrorCode::kPrecondition, "device set must be non-empty");
  }
  std::set<DeviceId> seen;
  for (DeviceId id : ids_) {
    if (id < 0) {
      throw Error(ErrorCode::kPrecondition,
                  "device id " + std::to_string(id) + " is negative");
    }
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::kPrecondition,
                  "device id " + std::to_string(id) + " listed twice");
    }
  }
}

DeviceSet DeviceSet::first_n(int n) {
  std::vector<DeviceId> ids(static_cast<std::size_t>(std::max(n, 0)));
  std::iota(ids.begin(), ids.end(), 0);
  return DeviceSet(std::move(ids));
}

DeviceSet DeviceSet::prefix(std::size_t n) const {
  if (n == 0 || n > ids_.size()) {
    throw Error(ErrorCode::kPrecondition,
                "cannot take " + std::to_string(n) + " of " +
                    std::to_string(ids_.size()) + " devices");
  }
  return DeviceSet({ids_.begin(), ids_.begin() + static_cast<long>(n)});
}

// ---------------------------------------------------------------------------
// Graph

Node& Graph::add_node(Node node) {
  const NodeId id = node.id;
  auto [it, inserted] = nodes_.emplace(id, std::move(node));
  if (!inserted) {
    throw Error(ErrorCode::kInvalidGraph, "duplicate node id '" + id + "'");
  }
  return it->second;
}

void Graph::remove_node(const NodeId& id) { nodes_.erase(id); }

const Node& Graph::node(const NodeId& id) const {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw Error(ErrorCode::kInvalidGraph, "no node '" + id + "'");
  }
  return it->second;
}

Node& Graph::mutable_node(const NodeId& id) {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw Error(ErrorCode::kInvalidGraph, "no node '" + id + "'");
  }
  return it->second;
}

std::map<NodeId, std::vector<NodeId>> Graph::consumers() const {
  std::map<NodeId, std::vector<NodeId>> out;
  for (const auto& [id, node] : nodes_) {
    for (const auto& in : node.inputs) {
      auto& list = out[in.node];
      if (list.empty() || list.back() != id) list.push_back(id);
    }
  }
  return out;
}

const TensorShape& Graph::shape_of(const TensorRef& ref) const {
  const Node& producer = node(ref.node);
  if (!producer.output_shape) {
    throw Error(ErrorCode::kUnshapedGraph,
                "node '" + ref.node + "' has no inferred shape");
  }
  return *producer.output_shape;
}

bool Graph::structurally_equal(const Graph& other) const {
  if (name_ != other.name_ || outputs_ != other.outputs_ ||
      nodes_.size() != other.nodes_.size()) {
    return false;
  }
  for (const auto& [id, a] : nodes_) {
    const auto it = other.nodes_.find(id);
    if (it == other.nodes_.end()) return false;
    const Node& b = it->second;
    if (a.kind != b.kind || a.inputs != b.inputs || !(a.attrs == b.attrs) ||
        a.device != b.device) {
      return false;
    }
  }
  return true;
}

bool ValidationReport::has_rule(std::string_view rule) const {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const Finding& f) { return f.rule == rule; });
}

// ---------------------------------------------------------------------------
// Topological order

namespace {

struct KahnResult {
  std::vector<NodeId> order;
  std::vector<NodeId> stuck;  // nodes on or downstream of a cycle
};

KahnResult kahn(const Graph& graph) {
  std::map<NodeId, int> pending;
  std::map<NodeId, std::vector<NodeId>> users;
  for (const auto& [id, node] : graph.nodes()) {
    std::set<NodeId> distinct;
    for (const auto& in : node.inputs) {
      if (graph.has_node(in.node)) distinct.insert(in.node);
    }
    pending[id] = static_cast<int>(distinct.size());
    for (const auto& producer : distinct) users[producer].push_back(id);
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (const auto& [id, count] : pending) {
    if (count == 0) ready.push(id);
  }
  KahnResult result;
  while (!ready.empty()) {
    NodeId id = ready.top();
    ready.pop();
    for (const auto& user : users[id]) {
      if (--pending[user] == 0) ready.push(user);
    }
    result.order.push_back(std::move(id));
  }
  for (const auto& [id, count] : pending) {
    if (count > 0) result.stuck.push_back(id);
  }
  return result;
}

// Of the nodes Kahn could not order, keep only those that also feed back into
// the stuck set (drops nodes merely downstream of a cycle).
std::vector<NodeId> nodes_on_cycles(const Graph& graph,
                                    const std::vector<NodeId>& stuck) {
  std::set<NodeId> live(stuck.begin(), stuck.end());
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = live.begin(); it != live.end();) {
      bool feeds_live = false;
      for (const auto& other : live) {
        for (const auto& in : graph.node(other).inputs) {
          if (in.node == *it) feeds_live = true;
        }
      }
      if (!feeds_live) {
        it = live.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  return {live.begin(), live.end()};
}

std::string join(const std::vector<NodeId>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

}  // namespace

std::vector<NodeId> topo_order(const Graph& graph) {
  for (const auto& [id, node] : graph.nodes()) {
    for (const auto& in : node.inputs) {
      if (!graph.has_node(in.node)) {
        throw Error(ErrorCode::kInvalidGraph,
                    "node '" + id + "' has unresolved input '" + in.node + "'");
      }
    }
  }
  KahnResult result = kahn(graph);
  if (!result.stuck.empty()) {
    throw Error(ErrorCode::kCycle,
                "cycle detected through " +
                    join(nodes_on_cycles(graph, result.stuck)));
  }
  return result.order;
}

// ---------------------------------------------------------------------------
// Shape inference

namespace {

[[noreturn]] void shape_error(const Node& node, const std::string& what,
                              const TensorShape& a, const TensorShape& b) {
  throw Error(ErrorCode::kShapeMismatch,
              "node '" + node.id + "' (" + std::string(to_string(node.kind)) +
                  "): " + what + ": " + a.str() + " vs " + b.str());
}

[[noreturn]] void shape_error(const Node& node, const std::string& what,
                              const TensorShape& a) {
  throw Error(ErrorCode::kShapeMismatch,
              "node '" + node.id + "' (" + std::string(to_string(node.kind)) +
                  "): " + what + ": " + a.str());
}

TensorShape shape_from_attrs(const Node& node) {
  TensorShape shape;
  shape.dims = node.attrs.get_ints("shape");
  if (shape.dims.empty()) {
    throw Error(ErrorCode::kShapeMismatch,
                "node '" + node.id + "': shape must have rank >= 1");
  }
  for (const auto dim : shape.dims) {
    if (dim < 1) {
      throw Error(ErrorCode::kShapeMismatch,
                  "node '" + node.id + "': dims must be >= 1, got " +
                      std::to_string(dim));
    }
  }
  if (node.attrs.has("batch_axis")) {
    const auto axis = node.attrs.get_int("batch_axis");
    if (axis < 0 || static_cast<std::size_t>(axis) >= shape.dims.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "node '" + node.id + "': batch_axis " + std::to_string(axis) +
                      " out of range for " + shape.str());
    }
    shape.batch_axis = static_cast<std::size_t>(axis);
  }
  return shape;
}

std::int64_t trailing_elements(const TensorShape& shape) {
  return shape.num_elements() / shape.dims[0];
}

void require_leading_batch(const Node& node, const TensorShape& shape) {
  if (shape.rank() < 2 || (shape.batch_axis && *shape.batch_axis != 0)) {
    shape_error(node, "expected [B, ...] with batch on axis 0", shape);
  }
}

void require_rank(const Node& node, const TensorShape& shape, std::size_t r) {
  if (shape.rank() != r) {
    shape_error(node, "expected rank " + std::to_string(r), shape);
  }
}

void require_same(const Node& node, const TensorShape& a,
                  const TensorShape& b) {
  if (a.dims != b.dims) shape_error(node, "operand shapes differ", a, b);
}

}  // namespace

TensorShape infer_node_shape(const Node& node,
                             const std::vector<TensorShape>& in) {
  switch (node.kind) {
    case OpKind::kInput:
    case OpKind::kVariable:
      return shape_from_attrs(node);

    case OpKind::kMatMul: {
      require_leading_batch(node, in[0]);
      require_rank(node, in[1], 2);
      if (trailing_elements(in[0]) != in[1].dims[0]) {
        shape_error(node, "inner dimensions differ", in[0], in[1]);
      }
      return {{in[0].dims[0], in[1].dims[1]}, in[0].batch_axis};
    }
    case OpKind::kConv2D: {
      require_rank(node, in[0], 4);
      require_rank(node, in[1], 4);
      require_leading_batch(node, in[0]);
      const auto& w = in[1].dims;
      if (w[0] != w[1] || w[0] % 2 == 0) {
        shape_error(node, "kernel must be square and odd", in[1]);
      }
      if (w[2] != in[0].dims[3]) {
        shape_error(node, "input channels differ", in[0], in[1]);
      }
      return {{in[0].dims[0], in[0].dims[1], in[0].dims[2], w[3]},
              in[0].batch_axis};
    }
    case OpKind::kBiasAdd: {
      require_rank(node, in[1], 1);
      if (in[0].dims.back() != in[1].dims[0]) {
        shape_error(node, "bias length differs from last dim", in[0], in[1]);
      }
      return in[0];
    }
    case OpKind::kReLU:
      return in[0];
    case OpKind::kSoftmaxXentLoss: {
      require_rank(node, in[0], 2);
      require_same(node, in[0], in[1]);
      return {{1}, std::nullopt};
    }
    case OpKind::kGradSoftmaxXent: {
      require_rank(node, in[0], 2);
      require_same(node, in[0], in[1]);
      return in[0];
    }
    case OpKind::kSplit: {
      const auto axis = node.attrs.get_int("axis");
      const auto parts = node.attrs.get_int("parts");
      if (axis < 0 || static_cast<std::size_t>(axis) >= in[0].rank()) {
        shape_error(node, "split axis " + std::to_string(axis) + " out of range",
                    in[0]);
      }
      if (parts < 2 || in[0].dims[axis] % parts != 0) {
        shape_error(node, "cannot split into " + std::to_string(parts) +
                              " equal parts", in[0]);
      }
      TensorShape out = in[0];
      out.dims[axis] /= parts;
      return out;
    }
    case OpKind::kConcat: {
      const auto axis = node.attrs.get_int("axis");
      if (axis < 0 || static_cast<std::size_t>(axis) >= in[0].rank()) {
        shape_error(node, "concat axis " + std::to_string(axis) + " out of range",
                    in[0]);
      }
      TensorShape out = in[0];
      for (std::size_t i = 1; i < in.size(); ++i) {
        TensorShape a = in[0], b = in[i];
        if (a.rank() != b.rank()) shape_error(node, "ranks differ", a, b);
        a.dims[axis] = b.dims[axis] = 0;
        if (a.dims != b.dims) shape_error(node, "non-axis dims differ", in[0], in[i]);
        out.dims[axis] += in[i].dims[axis];
      }
      return out;
    }
    case OpKind::kAllReduceSum:
    case OpKind::kAddN: {
      for (std::size_t i = 1; i < in.size(); ++i) require_same(node, in[0], in[i]);
      return in[0];
    }
    case OpKind::kGradMatMulW: {
      require_leading_batch(node, in[0]);
      require_rank(node, in[1], 2);
      if (in[0].dims[0] != in[1].dims[0]) {
        shape_error(node, "batch sizes differ", in[0], in[1]);
      }
      return {{trailing_elements(in[0]), in[1].dims[1]}, std::nullopt};
    }
    case OpKind::kGradMatMulX: {
      require_rank(node, in[0], 2);
      require_rank(node, in[1], 2);
      if (in[0].dims[1] != in[1].dims[1]) {
        shape_error(node, "output dims differ", in[0], in[1]);
      }
      if (in[2].dims[0] != in[0].dims[0] ||
          trailing_elements(in[2]) != in[1].dims[0]) {
        shape_error(node, "forward input incompatible", in[2], in[1]);
      }
      return in[2];
    }
    case OpKind::kGradConv2DW: {
      require_rank(node, in[0], 4);
      require_rank(node, in[1], 4);
      const auto k = node.attrs.get_int("kernel");
      if (k < 1 || k % 2 == 0) {
        shape_error(node, "kernel must be odd", in[0]);
      }
      for (int axis = 0; axis < 3; ++axis) {
        if (in[0].dims[axis] != in[1].dims[axis]) {
          shape_error(node, "input and output spatial dims differ", in[0], in[1]);
        }
      }
      return {{k, k, in[0].dims[3], in[1].dims[3]}, std::nullopt};
    }
    case OpKind::kGradConv2DX: {
      require_rank(node, in[0], 4);
      require_rank(node, in[1], 4);
      if (in[0].dims[3] != in[1].dims[3]) {
        shape_error(node, "output channels differ", in[0], in[1]);
      }
      return {{in[0].dims[0], in[0].dims[1], in[0].dims[2], in[1].dims[2]},
              in[0].batch_axis};
    }
    case OpKind::kGradBias:
      return {{in[0].dims.back()}, std::nullopt};
    case OpKind::kGradReLU:
      require_same(node, in[0], in[1]);
      return in[0];
    case OpKind::kSgdUpdate: {
      require_same(node, in[0], in[1]);
      return {in[0].dims, std::nullopt};
    }
  }
  throw Error(ErrorCode::kUnsupportedKind, "unknown kind at '" + node.id + "'");
}

Graph infer_shapes(const Graph& graph) {
  Graph out = graph;
  for (const auto& id : topo_order(graph)) {
    Node& node = out.mutable_node(id);
    std::vector<TensorShape> in;
    in.reserve(node.inputs.size());
    for (const auto& ref : node.inputs) {
      const Node& producer = out.node(ref.node);
      in.push_back(*producer.output_shape);
    }
    node.output_shape = infer_node_shape(node, in);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::optional<std::string> check_attrs(const Node& node) {
  const auto& specs = attr_specs(node.kind);
  for (const auto& [key, value] : node.attrs.values()) {
    const auto spec = std::find_if(specs.begin(), specs.end(),
                                   [&](const AttrSpec& s) { return s.key == key; });
    if (spec == specs.end()) return "unknown attribute '" + key + "'";
    const bool type_ok =
        (spec->type == AttrType::kInt && std::holds_alternative<std::int64_t>(value)) ||
        (spec->type == AttrType::kDouble && std::holds_alternative<double>(value)) ||
        (spec->type == AttrType::kString && std::holds_alternative<std::string>(value)) ||
        (spec->type == AttrType::kInts &&
         std::holds_alternative<std::vector<std::int64_t>>(value));
    if (!type_ok) return "attribute '" + key + "' has the wrong type";
  }
  for (const auto& spec : specs) {
    if (spec.required && !node.attrs.has(std::string(spec.key))) {
      return "missing attribute '" + std::string(spec.key) + "'";
    }
  }
  switch (node.kind) {
    case OpKind::kSplit:
      if (node.attrs.get_int("parts") < 2) return "split part count must be >= 2";
      break;
    case OpKind::kSgdUpdate:
      if (!(node.attrs.get_double("learning_rate") > 0.0)) {
        return "learning_rate must be positive";
      }
      break;
    case OpKind::kSoftmaxXentLoss:
    case OpKind::kGradSoftmaxXent:
      if (node.attrs.get_int_or("normalizer", 1) < 1) {
        return "normalizer must be >= 1";
      }
      break;
    case OpKind::kAddN: {
      const auto role = node.attrs.get_string_or("role", "sum");
      if (role != "sum" && role != "grad_aggregate") {
        return "AddN role must be 'sum' or 'grad_aggregate', got '" + role + "'";
      }
      break;
    }
    case OpKind::kInput: {
      const auto data = node.attrs.get_string_or("data", "features");
      if (data != "features" && data != "labels") {
        return "Input data must be 'features' or 'labels', got '" + data + "'";
      }
      break;
    }
    default:
      break;
  }
  return std::nullopt;
}

}  // namespace

ValidationReport validate(const Graph& graph) {
  ValidationReport report;
  auto add = [&](const NodeId& id, std::string rule, std::string detail) {
    report.findings.push_back({id, std::move(rule), std::move(detail)});
  };

  bool structural_ok = true;
  std::map<NodeId, int> updates_per_variable;
  for (const auto& [id, node] : graph.nodes()) {
    const auto& t = traits(node.kind);
    const int arity = static_cast<int>(node.inputs.size());
    if (arity < t.min_arity || (t.max_arity != kVariadic && arity > t.max_arity)) {
      add(id, "arity", std::string(t.name) + " takes " +
                           std::to_string(t.min_arity) +
                           (t.max_arity == kVariadic ? "+" : "") +
                           " inputs, got " + std::to_string(arity));
      structural_ok = false;
    }
    if (auto problem = check_attrs(node)) {
      add(id, "attribute", *problem);
      structural_ok = false;
    }
    if (node.device && *node.device < 0) {
      add(id, "device", "negative device id");
    }
    for (const auto& in : node.inputs) {
      if (!graph.has_node(in.node)) {
        add(id, "unresolved input", "input '" + in.node + "' does not exist");
        structural_ok = false;
        continue;
      }
      const Node& producer = graph.node(in.node);
      int ports = 1;
      if (producer.kind == OpKind::kSplit && producer.attrs.has("parts")) {
        const auto* parts = std::get_if<std::int64_t>(
            &producer.attrs.values().at("parts"));
        ports = parts ? static_cast<int>(*parts) : 1;
      }
      if (in.port < 0 || in.port >= ports) {
        add(id, "bad port", "input '" + in.str() + "' has no such output port");
        structural_ok = false;
      }
    }
    if (node.kind == OpKind::kSgdUpdate && !node.inputs.empty() &&
        graph.has_node(node.inputs[0].node)) {
      const Node& target = graph.node(node.inputs[0].node);
      if (target.kind != OpKind::kVariable) {
        add(id, "update target", "SgdUpdate must update a Variable, got '" +
                                     target.id + "'");
      } else {
        ++updates_per_variable[target.id];
      }
    }
  }
  for (const auto& [variable, count] : updates_per_variable) {
    if (count > 1) {
      add(variable, "multiple updates",
          "variable consumed by " + std::to_string(count) + " SgdUpdate nodes");
    }
  }
  for (const auto& out : graph.outputs()) {
    if (!graph.has_node(out)) {
      add(out, "unknown output", "graph output does not name a node");
    }
  }

  if (structural_ok) {
    const KahnResult kahn_result = kahn(graph);
    if (!kahn_result.stuck.empty()) {
      const auto cycle = nodes_on_cycles(graph, kahn_result.stuck);
      for (const auto& id : cycle) {
        add(id, "cycle detected", "node lies on a cycle through " + join(cycle));
      }
      structural_ok = false;
    }
  }
  if (structural_ok) {
    try {
      (void)infer_shapes(graph);
    } catch (const Error& e) {
      const std::string message = e.what();
      const auto open = message.find('\'');
      const auto close = message.find('\'', open + 1);
      const NodeId where = (open != std::string::npos && close != std::string::npos)
                               ? message.substr(open + 1, close - open - 1)
                               : NodeId{};
      add(where, "shape", message);
    }
  }
  return report;
}

}  // namespace wap
