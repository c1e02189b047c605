// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/graph_modifier.hpp"

#include <algorithm>
#include <functional>
#include <regex>

namespace wap {

std::string_view to_string(TransformStep step) {
  switch (step) {
    case TransformStep::kStep1: return "step1";
    case TransformStep::kStep2: return "step2";
    case TransformStep::kStep3: return "step3";
  }
  return "step?";
}

std::optional<TransformStep> parse_transform_step(std::string_view name) {
  if (name == "step1") return TransformStep::kStep1;
  if (name == "step2") return TransformStep::kStep2;
  if (name == "step3") return TransformStep::kStep3;
  return std::nullopt;
}

NodeId replica_id(const NodeId& id, DeviceId device) {
  return id + "/dev" + std::to_string(device);
}

namespace {

std::optional<std::size_t> replica_suffix_start(const NodeId& id) {
  const auto slash = id.rfind("/dev");
  if (slash == std::string::npos || slash + 4 >= id.size()) return std::nullopt;
  for (std::size_t i = slash + 4; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return std::nullopt;
  }
  return slash;
}

}  // namespace

bool is_replica_id(const NodeId& id) { return replica_suffix_start(id).has_value(); }

NodeId base_id(const NodeId& id) {
  const auto start = replica_suffix_start(id);
  return start ? id.substr(0, *start) : id;
}

bool is_gradient_aggregation(const Node& node) {
  return node.kind == OpKind::kAllReduceSum ||
         (node.kind == OpKind::kAddN &&
          node.attrs.get_string_or("role", "sum") == "grad_aggregate");
}

namespace {

template <typename Fn>
void for_each_distinct_edge(const Graph& graph, Fn&& fn) {
  for (const auto& [id, node] : graph.nodes()) {
    std::set<NodeId> seen;
    for (const auto& in : node.inputs) {
      if (seen.insert(in.node).second) fn(graph.node(in.node), in, node);
    }
  }
}

bool crosses_devices(const Node& a, const Node& b) {
  return a.device && b.device && *a.device != *b.device;
}

}  // namespace

std::int64_t count_cross_device_edges(const Graph& graph) {
  std::int64_t count = 0;
  for_each_distinct_edge(graph, [&](const Node& from, const TensorRef&, const Node& to) {
    if (crosses_devices(from, to)) ++count;
  });
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::kAllReduceSum) {
      count += static_cast<std::int64_t>(node.inputs.size());
    }
  }
  return count;
}

std::vector<Edge> non_aggregation_cross_device_edges(const Graph& graph) {
  std::vector<Edge> edges;
  for_each_distinct_edge(graph, [&](const Node& from, const TensorRef& ref, const Node& to) {
    if (crosses_devices(from, to) && !is_gradient_aggregation(to) &&
        !is_gradient_aggregation(from)) {
      edges.push_back({ref, to.id});
    }
  });
  return edges;
}

PartitionSummary summarize_partitions(const Graph& graph) {
  PartitionSummary summary;
  std::set<NodeId> variables;
  std::map<NodeId, NodeId> parent;
  std::function<NodeId(const NodeId&)> find = [&](const NodeId& x) -> NodeId {
    auto& p = parent[x];
    if (p.empty() || p == x) return p = x;
    return p = find(p);
  };
  auto in_partition = [](const Node& n) {
    return n.device.has_value() && n.kind != OpKind::kAllReduceSum;
  };
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::kAllReduceSum) ++summary.allreduce_nodes;
    if (node.kind == OpKind::kAddN && is_gradient_aggregation(node)) {
      ++summary.grad_aggregate_addn;
    }
    if (node.kind == OpKind::kVariable) variables.insert(base_id(id));
    if (in_partition(node)) find(id);
  }
  summary.variables = static_cast<int>(variables.size());
  for_each_distinct_edge(graph, [&](const Node& from, const TensorRef&, const Node& to) {
    if (in_partition(from) && in_partition(to)) parent[find(from.id)] = find(to.id);
  });
  std::map<NodeId, std::set<DeviceId>> devices_per_root;
  for (const auto& [id, node] : graph.nodes()) {
    if (in_partition(node)) devices_per_root[find(id)].insert(*node.device);
  }
  summary.partitions = static_cast<int>(devices_per_root.size());
  for (const auto& [root, devices] : devices_per_root) {
    if (devices.size() != 1) summary.partitions_device_local = false;
  }
  return summary;
}

nlohmann::json report_to_json(const TransformReport& r) {
  return {{"step", std::string(to_string(r.step))},
          {"nodes_replicated", r.nodes_replicated},
          {"splits_inserted", r.splits_inserted},
          {"concats_inserted", r.concats_inserted},
          {"split_concat_pairs_removed", r.split_concat_pairs_removed},
          {"split_concat_pairs_kept", r.split_concat_pairs_kept},
          {"cross_device_edges_before", r.cross_device_edges_before},
          {"cross_device_edges_after", r.cross_device_edges_after},
          {"aggregators_removed", r.aggregators_removed},
          {"allreduce_nodes_inserted", r.allreduce_nodes_inserted}};
}

// ---------------------------------------------------------------------------
// Replication core

namespace {

// Per-device value of a replicated tensor.
enum class Dist { kSharded, kPartial, kReplicated };

// What a replica needs from one of its inputs.
enum class Need { kShard, kPartial, kReplica };

struct ReplicationRule {
  std::vector<Need> needs;
  Dist output;
};

// A source node order and choice of nodes to replicate.
class Distributor {
 public:
  Distributor(const Graph& source, const DeviceSet& devices, bool place_on_first)
      : src_(source), devices_(devices), place_on_first_(place_on_first),
        out_(source.name()) {
    // Reuse existing batch splits.
    for (const auto& [id, node] : src_.nodes()) {
      if (node.kind == OpKind::kSplit &&
          node.attrs.get_int("parts") == static_cast<std::int64_t>(devices_.size())) {
        split_memo_.emplace(node.inputs[0], id);
      }
    }
  }

  using Selector = std::function<bool(const Node&, const Distributor&)>;

  Graph run(const Selector& select) {
    for (const auto& id : topo_order(src_)) {
      const Node& node = src_.node(id);
      std::optional<ReplicationRule> rule;
      if (select(node, *this)) rule = rule_for(node);
      if (rule) {
        replicate(node, *rule);
      } else {
        copy_single(node);
      }
    }
    std::vector<NodeId> outputs;
    for (const auto& o : src_.outputs()) {
      const auto it = replicated_.find(o);
      if (it == replicated_.end()) {
        outputs.push_back(o);
      } else if (it->second == Dist::kReplicated) {
        for (DeviceId dev : devices_.ids()) outputs.push_back(replica_id(o, dev));
      } else {
        outputs.push_back(fetch_on_host(o, it->second));
      }
    }
    out_.set_outputs(std::move(outputs));
    return infer_shapes(out_);
  }

  /// Rule for replicating `node` given the current state, or nullopt when its
  /// inputs cannot be distributed.
  std::optional<ReplicationRule> rule_for(const Node& node) const {
    ReplicationRule rule;
    using N = Need;
    switch (node.kind) {
      case OpKind::kVariable: rule = {{}, Dist::kReplicated}; break;
      case OpKind::kSgdUpdate: rule = {{N::kReplica, N::kReplica}, Dist::kReplicated}; break;
      case OpKind::kMatMul:
      case OpKind::kConv2D:
      case OpKind::kBiasAdd: rule = {{N::kShard, N::kReplica}, Dist::kSharded}; break;
      case OpKind::kReLU: rule = {{N::kShard}, Dist::kSharded}; break;
      case OpKind::kSoftmaxXentLoss: rule = {{N::kShard, N::kShard}, Dist::kPartial}; break;
      case OpKind::kGradSoftmaxXent:
      case OpKind::kGradReLU: rule = {{N::kShard, N::kShard}, Dist::kSharded}; break;
      case OpKind::kGradBias: rule = {{N::kShard}, Dist::kPartial}; break;
      case OpKind::kGradMatMulW:
      case OpKind::kGradConv2DW: rule = {{N::kShard, N::kShard}, Dist::kPartial}; break;
      case OpKind::kGradMatMulX:
        rule = {{N::kShard, N::kReplica, N::kShard}, Dist::kSharded};
        break;
      case OpKind::kGradConv2DX: rule = {{N::kShard, N::kReplica}, Dist::kSharded}; break;
      case OpKind::kAddN: {
        if (node.attrs.get_string_or("role", "sum") != "sum") return std::nullopt;
        const bool all_partial = std::all_of(
            node.inputs.begin(), node.inputs.end(), [&](const TensorRef& in) {
              const auto state = state_of(in.node);
              return state && *state == Dist::kPartial;
            });
        rule.needs.assign(node.inputs.size(), all_partial ? N::kPartial : N::kShard);
        rule.output = all_partial ? Dist::kPartial : Dist::kSharded;
        break;
      }
      default:
        return std::nullopt;
    }
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (!can_supply(node.inputs[i], rule.needs[i])) return std::nullopt;
    }
    return rule;
  }

  std::optional<Dist> state_of(const NodeId& id) const {
    const auto it = replicated_.find(id);
    if (it == replicated_.end()) return std::nullopt;
    return it->second;
  }

  std::int64_t replicated_count() const {
    return static_cast<std::int64_t>(replicated_.size());
  }
  std::int64_t splits_inserted() const { return splits_inserted_; }
  std::int64_t concats_inserted() const { return concats_inserted_; }

 private:
  int d() const { return static_cast<int>(devices_.size()); }

  // Source node that is one member of a full per-device replica set.
  bool is_group_member(const NodeId& id) const {
    if (!is_replica_id(id)) return false;
    const NodeId base = base_id(id);
    return std::all_of(devices_.ids().begin(), devices_.ids().end(),
                       [&](DeviceId dev) { return src_.has_node(replica_id(base, dev)); });
  }

  bool splittable(const TensorRef& ref) const {
    const TensorShape& shape = src_.shape_of(ref);
    return shape.batch_axis && shape.batch() % d() == 0;
  }

  bool can_supply(const TensorRef& ref, Need need) const {
    const auto state = state_of(ref.node);
    switch (need) {
      case Need::kShard:
        if (state) return *state == Dist::kSharded;
        return !is_group_member(ref.node) && splittable(ref);
      case Need::kPartial:
        return state && *state == Dist::kPartial;
      case Need::kReplica:
        return !state || *state != Dist::kSharded;
    }
    return false;
  }

  std::optional<DeviceId> device_in_output(const NodeId& id) const {
    return out_.node(id).device;
  }

  Node& add(Node node) { return out_.add_node(std::move(node)); }

  TensorRef split_of(const TensorRef& ref, std::size_t k) {
    auto it = split_memo_.find(ref);
    if (it == split_memo_.end()) {
      const TensorShape& shape = src_.shape_of(ref);
      if (!shape.batch_axis || shape.batch() % d() != 0) {
        throw Error(ErrorCode::kNondivisibleBatch,
                    "tensor '" + ref.str() + "' " + shape.str() +
                        " cannot be split into " + std::to_string(d()) + " parts");
      }
      Node split;
      split.id = ref.node + (ref.port ? "_" + std::to_string(ref.port) : "") + "/split";
      split.kind = OpKind::kSplit;
      split.inputs = {ref};
      split.attrs.set("axis", static_cast<std::int64_t>(*shape.batch_axis));
      split.attrs.set("parts", static_cast<std::int64_t>(d()));
      split.device = device_in_output(ref.node);
      it = split_memo_.emplace(ref, add(std::move(split)).id).first;
      ++splits_inserted_;
    }
    return {it->second, static_cast<int>(k)};
  }

  std::vector<TensorRef> replica_refs(const NodeId& id) const {
    std::vector<TensorRef> refs;
    for (DeviceId dev : devices_.ids()) refs.push_back({replica_id(id, dev), 0});
    return refs;
  }

  static std::string place_suffix(std::optional<DeviceId> device, DeviceId first) {
    if (!device) return "/host";
    if (*device == first) return "";
    return "/on" + std::to_string(*device);
  }

  TensorRef concat_of(const NodeId& id, std::optional<DeviceId> device) {
    const auto key = std::make_pair(id, device);
    auto it = full_memo_.find(key);
    if (it == full_memo_.end()) {
      Node concat;
      concat.id = id + "/concat" + place_suffix(device, devices_[0]);
      concat.kind = OpKind::kConcat;
      concat.inputs = replica_refs(id);
      concat.attrs.set("axis", static_cast<std::int64_t>(*src_.shape_of({id, 0}).batch_axis));
      concat.device = device;
      it = full_memo_.emplace(key, add(std::move(concat)).id).first;
      ++concats_inserted_;
    }
    return {it->second, 0};
  }

  TensorRef aggregate_of(const NodeId& id, std::optional<DeviceId> device,
                         bool gradient) {
    const auto key = std::make_pair(id, device);
    auto it = full_memo_.find(key);
    if (it == full_memo_.end()) {
      Node sum;
      if (gradient && device) {
        sum.id = replica_id(id + "/aggregate", *device);
      } else {
        sum.id = id + "/sum" + place_suffix(device, devices_[0]);
      }
      sum.kind = OpKind::kAddN;
      sum.inputs = replica_refs(id);
      sum.attrs.set("role", std::string(gradient ? "grad_aggregate" : "sum"));
      sum.device = device;
      it = full_memo_.emplace(key, add(std::move(sum)).id).first;
    }
    return {it->second, 0};
  }

  // Input for a replica on devices_[k].
  TensorRef supply(const TensorRef& ref, Need need, std::size_t k, OpKind consumer) {
    const DeviceId dev = devices_[k];
    const auto state = state_of(ref.node);
    switch (need) {
      case Need::kShard:
        if (state) return {replica_id(ref.node, dev), 0};
        return split_of(ref, k);
      case Need::kPartial:
        return {replica_id(ref.node, dev), 0};
      case Need::kReplica:
        if (state && *state == Dist::kReplicated) return {replica_id(ref.node, dev), 0};
        if (state && *state == Dist::kPartial) {
          return aggregate_of(ref.node, dev, consumer == OpKind::kSgdUpdate);
        }
        if (is_group_member(ref.node)) {
          return {replica_id(base_id(ref.node), dev), ref.port};
        }
        return ref;
    }
    return ref;
  }

  // Input for a single node placed on `device`.
  TensorRef supply_full(const TensorRef& ref, std::optional<DeviceId> device,
                        OpKind consumer) {
    const auto state = state_of(ref.node);
    if (!state) return ref;
    switch (*state) {
      case Dist::kSharded:
        return concat_of(ref.node, device);
      case Dist::kPartial:
        return aggregate_of(ref.node, device,
                            consumer == OpKind::kSgdUpdate && device.has_value());
      case Dist::kReplicated: {
        const auto& ids = devices_.ids();
        const bool local = device && std::find(ids.begin(), ids.end(), *device) != ids.end();
        return {replica_id(ref.node, local ? *device : devices_[0]), 0};
      }
    }
    return ref;
  }

  void replicate(const Node& node, const ReplicationRule& rule) {
    for (std::size_t k = 0; k < devices_.size(); ++k) {
      Node replica;
      replica.id = replica_id(node.id, devices_[k]);
      replica.kind = node.kind;
      replica.attrs = node.attrs;
      replica.device = devices_[k];
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        replica.inputs.push_back(supply(node.inputs[i], rule.needs[i], k, node.kind));
      }
      if (node.attrs.has("forward")) {
        const auto& forward = node.attrs.get_string("forward");
        if (state_of(forward)) replica.attrs.set("forward", replica_id(forward, devices_[k]));
      }
      add(std::move(replica));
    }
    replicated_.emplace(node.id, rule.output);
  }

  void copy_single(const Node& node) {
    Node copy = node;
    copy.output_shape.reset();
    if (place_on_first_) {
      if (node.kind == OpKind::kInput) {
        copy.device.reset();
      } else if (!(node.kind == OpKind::kSplit && !device_in_output(node.inputs[0].node))) {
        copy.device = devices_[0];
      }
    }
    for (auto& in : copy.inputs) in = supply_full(in, copy.device, node.kind);
    add(std::move(copy));
  }

  NodeId fetch_on_host(const NodeId& id, Dist state) {
    Node fetch;
    fetch.id = id;
    fetch.inputs = replica_refs(id);
    if (state == Dist::kSharded) {
      fetch.kind = OpKind::kConcat;
      fetch.attrs.set("axis", static_cast<std::int64_t>(*src_.shape_of({id, 0}).batch_axis));
    } else {
      fetch.kind = OpKind::kAddN;
      fetch.attrs.set("role", std::string("sum"));
    }
    return add(std::move(fetch)).id;
  }

  const Graph& src_;
  DeviceSet devices_;
  bool place_on_first_;
  Graph out_;
  std::map<NodeId, Dist> replicated_;
  std::map<TensorRef, NodeId> split_memo_;
  std::map<std::pair<NodeId, std::optional<DeviceId>>, NodeId> full_memo_;
  std::int64_t splits_inserted_ = 0;
  std::int64_t concats_inserted_ = 0;
};

void rewire(Graph& graph, const TensorRef& from, const TensorRef& to) {
  for (const auto& [id, node] : graph.nodes()) {
    Node& mutable_node = graph.mutable_node(id);
    for (auto& in : mutable_node.inputs) {
      if (in == from) in = to;
    }
  }
  auto outputs = graph.outputs();
  for (auto& o : outputs) {
    if (from.port == 0 && o == from.node) o = to.node;
  }
  graph.set_outputs(std::move(outputs));
}

bool has_consumers(const Graph& graph, const NodeId& id) {
  for (const auto& [other, node] : graph.nodes()) {
    for (const auto& in : node.inputs) {
      if (in.node == id) return true;
    }
  }
  const auto& outputs = graph.outputs();
  return std::find(outputs.begin(), outputs.end(), id) != outputs.end();
}

struct PairStats {
  std::int64_t removed = 0;
  std::int64_t kept = 0;
};

// Removes Split(Concat(x_0..x_{d-1})) pairs whose Concat feeds nothing but
// Splits, rewiring each Split part k to x_k. Then drops dead Concat/Split
// nodes.
PairStats cancel_split_concat_pairs(Graph& graph) {
  PairStats stats;
  std::vector<NodeId> splits;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::kSplit && graph.node(node.inputs[0].node).kind == OpKind::kConcat) {
      splits.push_back(id);
    }
  }
  const auto users = graph.consumers();
  for (const auto& split_id : splits) {
    const Node split = graph.node(split_id);
    const Node concat = graph.node(split.inputs[0].node);
    if (split.attrs.get_int("axis") != concat.attrs.get_int("axis") ||
        split.attrs.get_int("parts") != static_cast<std::int64_t>(concat.inputs.size())) {
      throw Error(ErrorCode::kMalformedPair,
                  "Concat '" + concat.id + "' (axis " +
                      std::to_string(concat.attrs.get_int("axis")) + ", " +
                      std::to_string(concat.inputs.size()) + " parts) feeds Split '" +
                      split.id + "' (axis " + std::to_string(split.attrs.get_int("axis")) +
                      ", " + std::to_string(split.attrs.get_int("parts")) + " parts)");
    }
    const auto it = users.find(concat.id);
    const bool only_splits =
        std::all_of(it->second.begin(), it->second.end(), [&](const NodeId& user) {
          return graph.node(user).kind == OpKind::kSplit;
        });
    const auto& outputs = graph.outputs();
    const bool is_output = std::find(outputs.begin(), outputs.end(), concat.id) != outputs.end();
    if (!only_splits || is_output) {
      ++stats.kept;
      continue;
    }
    for (std::size_t k = 0; k < concat.inputs.size(); ++k) {
      rewire(graph, {split.id, static_cast<int>(k)}, concat.inputs[k]);
    }
    graph.remove_node(split.id);
    ++stats.removed;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<NodeId> dead;
    for (const auto& [id, node] : graph.nodes()) {
      if ((node.kind == OpKind::kConcat || node.kind == OpKind::kSplit) &&
          !has_consumers(graph, id)) {
        dead.push_back(id);
      }
    }
    for (const auto& id : dead) graph.remove_node(id);
    changed = !dead.empty();
  }
  return stats;
}

void require_degree(const ParallelPlan& plan) {
  if (plan.d < 1 || static_cast<std::size_t>(plan.d) != plan.devices.size()) {
    throw Error(ErrorCode::kPrecondition,
                "plan degree " + std::to_string(plan.d) + " does not match its " +
                    std::to_string(plan.devices.size()) + " devices");
  }
}

void require_parallel_input(const Graph& graph, std::string_view step) {
  const bool parallel = std::any_of(graph.nodes().begin(), graph.nodes().end(),
                                    [](const auto& entry) { return is_replica_id(entry.first); });
  if (!parallel) {
    throw Error(ErrorCode::kPrecondition,
                std::string(step) + " expects a replicated graph; run the earlier steps first");
  }
}

std::int64_t global_batch_of(const Graph& graph) {
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::kInput && node.output_shape && node.output_shape->batch_axis) {
      return node.output_shape->batch();
    }
  }
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Steps

TransformResult replicate_primary(const Graph& input, const ParallelPlan& plan) {
  require_degree(plan);
  const Graph graph = infer_shapes(input);
  TransformReport report;
  report.step = TransformStep::kStep1;
  report.cross_device_edges_before = count_cross_device_edges(graph);
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::kSplit || node.kind == OpKind::kConcat ||
        node.kind == OpKind::kAllReduceSum || is_gradient_aggregation(node) ||
        is_replica_id(id)) {
      throw Error(ErrorCode::kAlreadyParallelized,
                  "node '" + id + "' (" + std::string(to_string(node.kind)) +
                      ") shows the graph is already parallelized");
    }
  }
  if (plan.d == 1) {
    report.cross_device_edges_after = report.cross_device_edges_before;
    return {graph, report};
  }
  const std::int64_t batch = global_batch_of(graph);
  if (batch % plan.d != 0) {
    throw Error(ErrorCode::kNondivisibleBatch,
                "global batch " + std::to_string(batch) + " is not divisible by d=" +
                    std::to_string(plan.d));
  }
  Distributor distributor(graph, plan.devices, /*place_on_first=*/true);
  Graph out = distributor.run([](const Node& node, const Distributor&) {
    return is_primary(node.kind) || is_primary_grad(node.kind) ||
           node.kind == OpKind::kVariable || node.kind == OpKind::kSgdUpdate;
  });
  report.nodes_replicated = distributor.replicated_count();
  report.splits_inserted = distributor.splits_inserted();
  report.concats_inserted = distributor.concats_inserted();
  report.cross_device_edges_after = count_cross_device_edges(out);
  return {std::move(out), report};
}

TransformResult localize_auxiliary(const Graph& input, const ParallelPlan& plan) {
  require_degree(plan);
  const Graph graph = infer_shapes(input);
  TransformReport report;
  report.step = TransformStep::kStep2;
  report.cross_device_edges_before = count_cross_device_edges(graph);
  if (plan.d == 1) {
    report.cross_device_edges_after = report.cross_device_edges_before;
    return {graph, report};
  }
  require_parallel_input(graph, "localize_auxiliary");
  const DeviceId home = plan.devices[0];
  Distributor distributor(graph, plan.devices, /*place_on_first=*/false);
  Graph out = distributor.run([&](const Node& node, const Distributor& dist) {
    switch (node.kind) {
      case OpKind::kBiasAdd:
      case OpKind::kReLU:
      case OpKind::kSoftmaxXentLoss:
      case OpKind::kGradSoftmaxXent:
      case OpKind::kGradReLU:
      case OpKind::kGradBias:
      case OpKind::kAddN:
        break;
      default:
        return false;
    }
    return node.device == home && !is_replica_id(node.id) && dist.rule_for(node).has_value();
  });
  report.nodes_replicated = distributor.replicated_count();
  report.splits_inserted = distributor.splits_inserted();
  report.concats_inserted = distributor.concats_inserted();
  const PairStats pairs = cancel_split_concat_pairs(out);
  report.split_concat_pairs_removed = pairs.removed;
  report.split_concat_pairs_kept = pairs.kept;
  out = infer_shapes(out);
  report.cross_device_edges_after = count_cross_device_edges(out);
  return {std::move(out), report};
}

TransformResult optimize_gradient_aggregation(const Graph& input, const ParallelPlan& plan) {
  require_degree(plan);
  Graph graph = infer_shapes(input);
  TransformReport report;
  report.step = TransformStep::kStep3;
  report.cross_device_edges_before = count_cross_device_edges(graph);
  if (plan.d == 1) {
    report.cross_device_edges_after = report.cross_device_edges_before;
    return {graph, report};
  }
  require_parallel_input(graph, "optimize_gradient_aggregation");

  std::map<std::vector<TensorRef>, std::vector<NodeId>> clusters;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::kAddN && is_gradient_aggregation(node)) {
      clusters[node.inputs].push_back(id);
    }
  }
  if (clusters.empty()) {
    throw Error(ErrorCode::kMissingAggregation,
                "no all-to-all gradient aggregation found to optimize");
  }
  for (const auto& [inputs, members] : clusters) {
    std::set<DeviceId> devices;
    for (const auto& m : members) {
      if (graph.node(m).device) devices.insert(*graph.node(m).device);
    }
    if (members.size() != inputs.size() || devices.size() != members.size()) {
      throw Error(ErrorCode::kMissingAggregation,
                  "gradient aggregation of '" + base_id(inputs.front().node) + "' spans " +
                      std::to_string(members.size()) + " devices, expected " +
                      std::to_string(inputs.size()));
    }
    Node allreduce;
    allreduce.id = base_id(inputs.front().node) + "/allreduce";
    allreduce.kind = OpKind::kAllReduceSum;
    allreduce.inputs = inputs;
    const NodeId allreduce_id = graph.add_node(std::move(allreduce)).id;
    for (const auto& m : members) {
      rewire(graph, {m, 0}, {allreduce_id, 0});
      graph.remove_node(m);
      ++report.aggregators_removed;
    }
    ++report.allreduce_nodes_inserted;
  }
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind != OpKind::kSgdUpdate) continue;
    if (graph.node(node.inputs[1].node).kind != OpKind::kAllReduceSum) {
      throw Error(ErrorCode::kMissingAggregation,
                  "update '" + id + "' of variable '" + base_id(node.inputs[0].node) +
                      "' is not fed by an all-to-all gradient aggregation");
    }
  }
  graph = infer_shapes(graph);
  report.cross_device_edges_after = count_cross_device_edges(graph);
  return {std::move(graph), report};
}

PipelineResult transform(const Graph& graph, const ParallelPlan& plan,
                         TransformStep stop_after) {
  const ValidationReport validation = validate(graph);
  if (!validation.ok()) {
    const Finding& f = validation.findings.front();
    throw Error(ErrorCode::kInvalidGraph,
                "input graph invalid at '" + f.node + "': " + f.rule + " (" + f.detail + ")");
  }
  PipelineResult result;
  TransformResult step1 = replicate_primary(graph, plan);
  result.reports.push_back(step1.report);
  if (plan.d == 1) {
    result.graph = infer_shapes(graph);
    for (auto step : {TransformStep::kStep2, TransformStep::kStep3}) {
      TransformReport empty;
      empty.step = step;
      empty.cross_device_edges_before = empty.cross_device_edges_after =
          step1.report.cross_device_edges_before;
      result.reports.push_back(empty);
    }
    return result;
  }
  Graph current = std::move(step1.graph);
  if (stop_after != TransformStep::kStep1) {
    TransformResult step2 = localize_auxiliary(current, plan);
    result.reports.push_back(step2.report);
    current = std::move(step2.graph);
    if (stop_after == TransformStep::kStep3) {
      TransformResult step3 = optimize_gradient_aggregation(current, plan);
      result.reports.push_back(step3.report);
      current = std::move(step3.graph);
    }
  }
  const ValidationReport final_check = validate(current);
  if (!final_check.ok()) {
    const Finding& f = final_check.findings.front();
    throw Error(ErrorCode::kInvalidGraph,
                "transformed graph invalid at '" + f.node + "': " + f.rule + " (" + f.detail + ")");
  }
  result.graph = std::move(current);
  return result;
}

}  // namespace wap
