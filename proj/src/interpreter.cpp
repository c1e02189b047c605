// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>

#include "wap/evaluator.hpp"
#include "wap/graph_modifier.hpp"
#include "wap/kernels.hpp"

namespace wap {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

// splitmix64; the stream is bit-stable across platforms, unlike the
// distributions in <random>.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// U[-scale, scale) with 53 random bits.
  double uniform(double scale) {
    const double unit = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return (2.0 * unit - 1.0) * scale;
  }

 private:
  std::uint64_t state_;
};

const TensorShape& shape_or_throw(const Node& node) {
  if (!node.output_shape) {
    throw Error(ErrorCode::kUnshapedGraph, "node '" + node.id + "' has no inferred shape");
  }
  return *node.output_shape;
}

}  // namespace

TensorValue initial_variable_value(const Node& variable, std::uint64_t seed) {
  const TensorShape& shape = shape_or_throw(variable);
  const double scale = variable.attrs.get_double_or("init_scale", 0.1);
  Stream stream(seed ^ fnv1a(base_id(variable.id)));
  TensorValue value(shape);
  for (std::size_t i = 0; i < value.size(); ++i) value[i] = stream.uniform(scale);
  return value;
}

Bindings<double> generate_inputs(const Graph& graph, std::uint64_t seed) {
  Bindings<double> feeds;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind != OpKind::kInput) continue;
    const TensorShape& shape = shape_or_throw(node);
    Stream stream(seed ^ fnv1a("input:" + id));
    TensorValue value(shape);
    if (node.attrs.get_string_or("data", "features") == "labels") {
      auto m = value.matrix();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        m(r, static_cast<Eigen::Index>(stream.next() % static_cast<std::uint64_t>(m.cols()))) =
            1.0;
      }
    } else {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] = stream.uniform(1.0);
    }
    feeds.emplace(id, std::move(value));
  }
  return feeds;
}

namespace {

std::string value_key(const TensorRef& ref) { return ref.str(); }

template <typename Scalar>
class Interpreter {
 public:
  Interpreter(const Graph& graph, const Bindings<Scalar>& inputs, std::uint64_t seed,
              const ExecutionOptions<Scalar>& options)
      : graph_(graph), inputs_(inputs), seed_(seed), options_(options) {}

  ExecutionResult<Scalar> run() {
    ExecutionResult<Scalar> result;
    for (const auto& id : topo_order(graph_)) {
      const Node& node = graph_.node(id);
      evaluate(node);
      for_each_port(node, [&](const TensorRef& ref, const Tensor<Scalar>& value) {
        if (!value.array().allFinite()) {
          result.diagnostics.push_back("node '" + ref.str() + "' (" +
                                       std::string(to_string(node.kind)) +
                                       ") produced non-finite values");
        }
      });
    }
    for (const auto& o : graph_.outputs()) result.outputs.emplace(o, values_.at({o, 0}));
    if (options_.keep_all) {
      for (auto& [ref, value] : values_) result.values.emplace(value_key(ref), value);
    }
    return result;
  }

 private:
  template <typename Fn>
  void for_each_port(const Node& node, Fn&& fn) const {
    const int ports = node.kind == OpKind::kSplit
                          ? static_cast<int>(node.attrs.get_int("parts"))
                          : 1;
    for (int p = 0; p < ports; ++p) fn(TensorRef{node.id, p}, values_.at({node.id, p}));
  }

  const Tensor<Scalar>& in(const Node& node, std::size_t i) const {
    return values_.at(node.inputs[i]);
  }

  std::vector<const Tensor<Scalar>*> all_inputs(const Node& node) const {
    std::vector<const Tensor<Scalar>*> parts;
    for (const auto& ref : node.inputs) parts.push_back(&values_.at(ref));
    return parts;
  }

  void put(const Node& node, Tensor<Scalar> value) {
    values_.insert_or_assign(TensorRef{node.id, 0}, std::move(value));
  }

  Tensor<Scalar> bound_input(const Node& node, const TensorShape& shape) const {
    const auto it = inputs_.find(node.id);
    if (it == inputs_.end()) {
      throw Error(ErrorCode::kMissingInput, "no value bound for input '" + node.id + "'");
    }
    if (it->second.shape().dims != shape.dims) {
      throw Error(ErrorCode::kMissingInput,
                  "input '" + node.id + "' bound with shape " + it->second.shape().str() +
                      ", expected " + shape.str());
    }
    return it->second.reshaped(shape);
  }

  Tensor<Scalar> variable_value(const Node& node, const TensorShape& shape) const {
    const auto it = options_.variable_overrides.find(base_id(node.id));
    if (it != options_.variable_overrides.end()) {
      if (it->second.shape().dims != shape.dims) {
        throw Error(ErrorCode::kPrecondition,
                    "override for variable '" + node.id + "' has shape " +
                        it->second.shape().str() + ", expected " + shape.str());
      }
      return it->second.reshaped(shape);
    }
    return initial_variable_value(node, seed_).template cast<Scalar>();
  }

  std::int64_t normalizer_of(const Node& node) const {
    return node.attrs.get_int_or("normalizer", in(node, 0).shape().dims[0]);
  }

  void evaluate(const Node& node) {
    const TensorShape& shape = shape_or_throw(node);
    namespace k = kernels;
    switch (node.kind) {
      case OpKind::kInput: put(node, bound_input(node, shape)); break;
      case OpKind::kVariable: put(node, variable_value(node, shape)); break;
      case OpKind::kMatMul: put(node, k::matmul(in(node, 0), in(node, 1), shape)); break;
      case OpKind::kConv2D: put(node, k::conv2d(in(node, 0), in(node, 1), shape)); break;
      case OpKind::kBiasAdd: put(node, k::bias_add(in(node, 0), in(node, 1))); break;
      case OpKind::kReLU: put(node, k::relu(in(node, 0))); break;
      case OpKind::kSoftmaxXentLoss:
        put(node, k::softmax_xent(in(node, 0), in(node, 1), normalizer_of(node)));
        break;
      case OpKind::kSplit: {
        auto parts = k::split(in(node, 0), static_cast<std::size_t>(node.attrs.get_int("axis")),
                              node.attrs.get_int("parts"), shape);
        for (std::size_t p = 0; p < parts.size(); ++p) {
          values_.insert_or_assign(TensorRef{node.id, static_cast<int>(p)},
                                   std::move(parts[p]));
        }
        break;
      }
      case OpKind::kConcat:
        put(node, k::concat(all_inputs(node),
                            static_cast<std::size_t>(node.attrs.get_int("axis")), shape));
        break;
      case OpKind::kAllReduceSum:
      case OpKind::kAddN: put(node, k::sum_n(all_inputs(node), shape)); break;
      case OpKind::kGradMatMulW:
        put(node, k::grad_matmul_w(in(node, 0), in(node, 1), shape));
        break;
      case OpKind::kGradMatMulX:
        put(node, k::grad_matmul_x(in(node, 0), in(node, 1), shape));
        break;
      case OpKind::kGradConv2DW:
        put(node, k::grad_conv2d_w(in(node, 0), in(node, 1), shape));
        break;
      case OpKind::kGradConv2DX:
        put(node, k::grad_conv2d_x(in(node, 0), in(node, 1), shape));
        break;
      case OpKind::kGradBias: put(node, k::grad_bias(in(node, 0), shape)); break;
      case OpKind::kGradReLU: put(node, k::grad_relu(in(node, 0), in(node, 1))); break;
      case OpKind::kGradSoftmaxXent:
        put(node, k::grad_softmax_xent(in(node, 0), in(node, 1), normalizer_of(node)));
        break;
      case OpKind::kSgdUpdate: {
        const auto lr = static_cast<Scalar>(node.attrs.get_double("learning_rate"));
        Tensor<Scalar> updated = in(node, 0);
        updated.array() -= lr * in(node, 1).array();
        put(node, std::move(updated));
        break;
      }
    }
  }

  const Graph& graph_;
  const Bindings<Scalar>& inputs_;
  std::uint64_t seed_;
  const ExecutionOptions<Scalar>& options_;
  std::map<TensorRef, Tensor<Scalar>> values_;
};

}  // namespace

template <typename Scalar>
ExecutionResult<Scalar> execute(const Graph& graph, const Bindings<Scalar>& inputs,
                                std::uint64_t seed,
                                const ExecutionOptions<Scalar>& options) {
  const Graph shaped = infer_shapes(graph);
  return Interpreter<Scalar>(shaped, inputs, seed, options).run();
}

template ExecutionResult<double> execute(const Graph&, const Bindings<double>&,
                                         std::uint64_t, const ExecutionOptions<double>&);
template ExecutionResult<float> execute(const Graph&, const Bindings<float>&,
                                        std::uint64_t, const ExecutionOptions<float>&);

// ---------------------------------------------------------------------------
// compare

bool EquivalenceReport::passed() const {
  return std::all_of(outputs.begin(), outputs.end(),
                     [](const OutputDeviation& o) { return o.pass; });
}

std::string EquivalenceReport::first_failure() const {
  for (const auto& o : outputs) {
    if (!o.pass) return o.worst_name;
  }
  return "";
}

namespace {

std::map<NodeId, std::vector<NodeId>> outputs_by_base(const Graph& graph) {
  std::map<NodeId, std::vector<NodeId>> groups;
  for (const auto& o : graph.outputs()) groups[base_id(o)].push_back(o);
  return groups;
}

double relative_deviation(const TensorValue& reference, const TensorValue& value) {
  if (reference.shape().dims != value.shape().dims) {
    return std::numeric_limits<double>::infinity();
  }
  const double diff = (reference.array() - value.array()).matrix().norm();
  const double scale = reference.array().matrix().norm();
  if (diff == 0.0) return 0.0;
  return scale > 0.0 ? diff / scale : std::numeric_limits<double>::infinity();
}

}  // namespace

EquivalenceReport compare(const Graph& a, const Graph& b, const Bindings<double>& inputs,
                          std::uint64_t seed, double tol) {
  const auto groups_a = outputs_by_base(a);
  const auto groups_b = outputs_by_base(b);
  for (const auto& [base, names] : groups_a) {
    if (!groups_b.count(base)) {
      throw Error(ErrorCode::kOutputMismatch,
                  "output '" + base + "' of '" + a.name() + "' has no counterpart in '" +
                      b.name() + "'");
    }
  }
  for (const auto& [base, names] : groups_b) {
    if (!groups_a.count(base)) {
      throw Error(ErrorCode::kOutputMismatch,
                  "output '" + names.front() + "' of '" + b.name() +
                      "' has no counterpart in '" + a.name() + "'");
    }
  }
  const auto result_a = execute<double>(a, inputs, seed);
  const auto result_b = execute<double>(b, inputs, seed);

  EquivalenceReport report;
  report.tolerance = tol;
  report.diagnostics = result_a.diagnostics;
  report.diagnostics.insert(report.diagnostics.end(), result_b.diagnostics.begin(),
                            result_b.diagnostics.end());
  for (const auto& [base, names_a] : groups_a) {
    const TensorValue& reference = result_a.outputs.at(names_a.front());
    OutputDeviation deviation;
    deviation.output = base;
    deviation.worst_name = groups_b.at(base).front();
    auto consider = [&](const NodeId& name, const TensorValue& value) {
      const double dev = relative_deviation(reference, value);
      // NaN compares false everywhere; treat as worst.
      if (!(dev <= deviation.max_relative_deviation)) {
        deviation.max_relative_deviation = std::isnan(dev)
                                               ? std::numeric_limits<double>::infinity()
                                               : dev;
        deviation.worst_name = name;
      }
    };
    for (const auto& name : names_a) consider(name, result_a.outputs.at(name));
    for (const auto& name : groups_b.at(base)) consider(name, result_b.outputs.at(name));
    deviation.pass = deviation.max_relative_deviation <= tol;
    report.max_relative_deviation =
        std::max(report.max_relative_deviation, deviation.max_relative_deviation);
    report.outputs.push_back(std::move(deviation));
  }
  return report;
}

nlohmann::json equivalence_to_json(const EquivalenceReport& report) {
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& o : report.outputs) {
    outputs.push_back({{"output", o.output},
                       {"worst", o.worst_name},
                       {"max_relative_deviation", o.max_relative_deviation},
                       {"pass", o.pass}});
  }
  return {{"passed", report.passed()},
          {"tolerance", report.tolerance},
          {"max_relative_deviation", report.max_relative_deviation},
          {"outputs", std::move(outputs)},
          {"diagnostics", report.diagnostics}};
}

}  // namespace wap
