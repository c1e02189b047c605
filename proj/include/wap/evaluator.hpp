// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Reference interpreter. Nodes run one at a time in topo order; every n-ary
// reduction (AddN, AllReduceSum) is a left fold over its inputs in the order
// they are listed, which for rewritten graphs is ascending device order, so a
// transformed graph reproduces single-device results up to reassociation of
// the batch sum only.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wap/graph_ir.hpp"
#include "wap/tensor.hpp"

namespace wap {

template <typename Scalar>
using Bindings = std::map<NodeId, Tensor<Scalar>>;

/// Deterministic feeds for every Input: features ~ U(-1, 1); labels are
/// one-hot rows. Streams are keyed by (seed, input id).
Bindings<double> generate_inputs(const Graph& graph, std::uint64_t seed);

/// Initial value of a Variable: U(-init_scale, init_scale) (default 0.1) from
/// a splitmix64 stream seeded with seed ^ fnv1a(base id). Replicas of one
/// variable therefore start bitwise-equal.
TensorValue initial_variable_value(const Node& variable, std::uint64_t seed);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view text);

template <typename Scalar>
struct ExecutionOptions {
  /// Keyed by variable base id; replaces the seeded initial value.
  Bindings<Scalar> variable_overrides;
  /// Return every node's value (port 0 for Splits is "id", others "id:k").
  bool keep_all = false;
};

template <typename Scalar>
struct ExecutionResult {
  Bindings<Scalar> outputs;
  Bindings<Scalar> values;  // only with keep_all
  /// Nodes that produced non-finite values.
  std::vector<std::string> diagnostics;
};

/// Interprets one training step. Throws kMissingInput when an Input has no
/// binding (or a binding of the wrong shape).
template <typename Scalar>
ExecutionResult<Scalar> execute(const Graph& graph, const Bindings<Scalar>& inputs,
                                std::uint64_t seed,
                                const ExecutionOptions<Scalar>& options = {});

extern template ExecutionResult<double> execute(const Graph&, const Bindings<double>&,
                                                std::uint64_t,
                                                const ExecutionOptions<double>&);
extern template ExecutionResult<float> execute(const Graph&, const Bindings<float>&,
                                               std::uint64_t,
                                               const ExecutionOptions<float>&);

struct OutputDeviation {
  /// Output name with replica suffixes stripped.
  std::string output;
  /// The output in graph b that deviates most.
  std::string worst_name;
  /// ||a - b|| / ||a|| (Euclidean), maximized over replicas.
  double max_relative_deviation = 0.0;
  bool pass = true;
};

struct EquivalenceReport {
  std::vector<OutputDeviation> outputs;
  double max_relative_deviation = 0.0;
  double tolerance = 0.0;
  std::vector<std::string> diagnostics;

  bool passed() const;
  /// First failing output, or "" when all pass.
  std::string first_failure() const;
};

/// Runs both graphs on the same inputs and seed and matches outputs by name
/// modulo "/dev<k>". Throws kOutputMismatch when the output sets differ.
EquivalenceReport compare(const Graph& a, const Graph& b, const Bindings<double>& inputs,
                          std::uint64_t seed, double tol);

nlohmann::json equivalence_to_json(const EquivalenceReport& report);

}  // namespace wap
