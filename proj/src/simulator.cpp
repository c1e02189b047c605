// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/simulator.hpp"

#include <algorithm>
#include <set>

#include "wap/graph_modifier.hpp"
#include "wap/nn_parser.hpp"

namespace wap {

namespace {

bool may_run_on_host(OpKind kind) {
  switch (kind) {
    case OpKind::kInput:
    case OpKind::kSplit:
    case OpKind::kConcat:
    case OpKind::kAddN:
    case OpKind::kAllReduceSum:
      return true;
    default:
      return false;
  }
}

struct Cost {
  double seconds = 0.0;
  double efficiency = 0.0;
};

class Scheduler {
 public:
  Scheduler(const Graph& graph, const DeviceProfile& profile)
      : graph_(graph), profile_(profile) {
    resolve_devices();
    assign_costs();
    map_aggregations();
  }

  // Greedy list scheduling: among nodes whose inputs are done, dispatch the
  // one that can start earliest (ties by topo position), so a device never
  // idles behind a ring step it could have run ahead of.
  Simulation run() {
    const auto order = topo_order(graph_);
    std::map<NodeId, std::size_t> position;
    std::map<NodeId, std::vector<NodeId>> consumers;
    std::map<NodeId, std::size_t> pending;
    for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
    for (const auto& id : order) {
      std::set<NodeId> producers;
      for (const auto& in : graph_.node(id).inputs) producers.insert(in.node);
      pending[id] = producers.size();
      for (const auto& p : producers) consumers[p].push_back(id);
    }
    std::set<std::size_t> ready;
    for (const auto& id : order) {
      if (pending[id] == 0) ready.insert(position[id]);
    }
    while (!ready.empty()) {
      auto best = ready.begin();
      double best_start = earliest_start(graph_.node(order[*best]));
      for (auto it = std::next(ready.begin()); it != ready.end(); ++it) {
        const double start = earliest_start(graph_.node(order[*it]));
        if (start < best_start) best = it, best_start = start;
      }
      const Node& node = graph_.node(order[*best]);
      ready.erase(best);
      if (node.kind == OpKind::kAllReduceSum) {
        ring_allreduce(node);
      } else {
        run_node(node);
      }
      for (const auto& c : consumers[node.id]) {
        if (--pending[c] == 0) ready.insert(position[c]);
      }
    }
    Simulation sim;
    sim.trace.node_spans = spans_;
    sim.trace.link_transfers = transfers_;
    double step = 0.0;
    for (const auto& [id, span] : spans_) step = std::max(step, span.end);
    for (const auto& t : transfers_) step = std::max(step, t.end);
    sim.trace.step_time = step;

    SimResult& r = sim.result;
    r.step_time = step;
    r.global_batch = global_batch();
    r.throughput = step > 0.0 ? static_cast<double>(r.global_batch) / step : 0.0;
    r.devices_used = static_cast<int>(used_devices_.size());
    r.energy_per_step = profile_.host_power * step;
    for (DeviceId dev : used_devices_) {
      r.energy_per_step += profile_.power_idle * step +
                           (profile_.power_peak - profile_.power_idle) * busy_[dev];
    }
    for (const auto& t : transfers_) {
      r.comm_bytes_total += t.bytes;
      r.comm_bytes_per_link[{t.src, t.dst}] += t.bytes;
    }
    return sim;
  }

 private:
  void resolve_devices() {
    std::set<DeviceId> assigned;
    for (const auto& [id, node] : graph_.nodes()) {
      if (node.device) assigned.insert(*node.device);
    }
    const bool multi = assigned.size() > 1;
    const DeviceId fallback = assigned.empty() ? 0 : *assigned.begin();
    for (const auto& [id, node] : graph_.nodes()) {
      std::optional<DeviceId> dev = node.device;
      if (!dev && node.kind != OpKind::kInput && node.kind != OpKind::kAllReduceSum) {
        if (!multi) {
          dev = fallback;
        } else if (!may_run_on_host(node.kind)) {
          throw Error(ErrorCode::kUnassignedDevice,
                      "node '" + id + "' (" + std::string(to_string(node.kind)) +
                          ") has no device in a graph spanning " +
                          std::to_string(assigned.size()) + " devices");
        }
      }
      if (dev) used_devices_.insert(*dev);
      device_[id] = dev;
    }
  }

  void assign_costs() {
    std::map<NodeId, std::vector<NodeId>> companions;
    for (const auto& [id, node] : graph_.nodes()) {
      if (is_primary_grad(node.kind) && node.attrs.has("forward")) {
        companions[node.attrs.get_string("forward")].push_back(id);
      }
    }
    for (const auto& [id, node] : graph_.nodes()) {
      if (!is_primary(node.kind)) continue;
      const FlopCount flops = flops_of(graph_, id);
      LayerWorkload layer;
      layer.layer = id;
      layer.kind = node.kind;
      layer.flops_fwd = flops.fwd;
      layer.flops_bwd = flops.bwd;
      layer.batch = graph_.shape_of(node.inputs[0]).dims[0];
      const double total = compute_time(layer, 1, profile_);
      const double eff = profile_.efficiency(static_cast<double>(layer.flops_total()));
      const double forward_share =
          layer.flops_total() > 0
              ? total * static_cast<double>(flops.fwd) / static_cast<double>(layer.flops_total())
              : 0.0;
      cost_[id] = {forward_share, eff};
      const auto it = companions.find(id);
      if (it == companions.end()) continue;
      const double each = (total - forward_share) / static_cast<double>(it->second.size());
      for (const auto& grad : it->second) cost_[grad] = {each, eff};
    }
  }

  void map_aggregations() {
    for (const auto& [id, node] : graph_.nodes()) {
      if (node.kind != OpKind::kSgdUpdate) continue;
      const Node& grad = graph_.node(node.inputs[1].node);
      if (is_gradient_aggregation(grad)) {
        variable_of_[grad.id] = base_id(node.inputs[0].node);
      }
    }
  }

  std::string purpose_for(const Node& consumer) const {
    if (!is_gradient_aggregation(consumer)) return "activation";
    const auto it = variable_of_.find(consumer.id);
    return "grad:" + (it != variable_of_.end() ? it->second : base_id(consumer.id));
  }

  double& free_at(DeviceId dev) { return device_free_[dev]; }

  // Lower bound on the start of a node whose producers are all scheduled;
  // pending transfers are not priced.
  double earliest_start(const Node& node) {
    double start = 0.0;
    for (const auto& in : node.inputs) start = std::max(start, spans_.at(in.node).end);
    if (node.kind == OpKind::kAllReduceSum) {
      start = std::max(start, fabric_free_);
      for (const auto& in : node.inputs) {
        if (const auto dev = device_.at(in.node)) start = std::max(start, free_at(*dev));
      }
    } else if (const auto dev = device_.at(node.id)) {
      start = std::max(start, free_at(*dev));
    }
    return start;
  }

  static std::int64_t bytes_of(const TensorShape& shape) {
    return shape.num_elements() * kWeightElementBytes;
  }

  double transfer(const TensorRef& ref, DeviceId src, DeviceId dst, const Node& consumer) {
    const auto key = std::make_pair(ref, dst);
    const auto memo = delivered_.find(key);
    if (memo != delivered_.end()) return memo->second;
    LinkTransfer t;
    t.src = src;
    t.dst = dst;
    t.bytes = bytes_of(graph_.shape_of(ref));
    t.start = std::max({spans_.at(ref.node).end, fabric_free_, free_at(src), free_at(dst)});
    t.end = t.start + profile_.link_latency +
            static_cast<double>(t.bytes) / profile_.link_bandwidth;
    t.tensor = ref.str();
    t.purpose = purpose_for(consumer);
    fabric_free_ = free_at(src) = free_at(dst) = t.end;
    transfers_.push_back(t);
    delivered_.emplace(key, t.end);
    return t.end;
  }

  void run_node(const Node& node) {
    const auto dev = device_.at(node.id);
    double ready = 0.0;
    std::set<TensorRef> seen;
    for (const auto& in : node.inputs) {
      if (!seen.insert(in).second) continue;
      const auto src = device_.at(in.node);
      if (src && dev && *src != *dev) {
        ready = std::max(ready, transfer(in, *src, *dev, node));
      } else {
        ready = std::max(ready, spans_.at(in.node).end);
      }
    }
    NodeSpan span{dev, ready, ready};
    if (dev) {
      const auto it = cost_.find(node.id);
      const Cost cost = it != cost_.end() ? it->second : Cost{};
      span.start = std::max(ready, free_at(*dev));
      span.end = span.start + cost.seconds;
      free_at(*dev) = span.end;
      busy_[*dev] += cost.seconds * cost.efficiency;
    }
    spans_[node.id] = span;
  }

  void ring_allreduce(const Node& node) {
    std::vector<DeviceId> ring;
    double ready = 0.0;
    for (const auto& in : node.inputs) {
      ready = std::max(ready, spans_.at(in.node).end);
      const auto dev = device_.at(in.node);
      if (!dev) {
        throw Error(ErrorCode::kUnassignedDevice,
                    "AllReduceSum '" + node.id + "' input '" + in.str() + "' has no device");
      }
      ring.push_back(*dev);
    }
    const auto d = static_cast<std::int64_t>(ring.size());
    const std::int64_t total = bytes_of(*node.output_shape);
    std::vector<std::int64_t> chunks(static_cast<std::size_t>(d), total / d);
    chunks.back() += total - (total / d) * d;
    const std::int64_t largest = *std::max_element(chunks.begin(), chunks.end());
    const std::string purpose = purpose_for(node);

    NodeSpan span{std::nullopt, ready, ready};
    double clock = ready;
    for (std::int64_t step = 0; step < 2 * (d - 1); ++step) {
      double start = std::max(clock, fabric_free_);
      for (DeviceId dev : ring) start = std::max(start, free_at(dev));
      const double end = start + profile_.allreduce_chunk_latency +
                         static_cast<double>(largest) / profile_.link_bandwidth;
      for (std::int64_t i = 0; i < d; ++i) {
        LinkTransfer t;
        t.src = ring[static_cast<std::size_t>(i)];
        t.dst = ring[static_cast<std::size_t>((i + 1) % d)];
        t.bytes = chunks[static_cast<std::size_t>(((i - step) % d + d) % d)];
        t.start = start;
        t.end = end;
        t.tensor = node.id;
        t.purpose = purpose;
        transfers_.push_back(std::move(t));
      }
      fabric_free_ = end;
      for (DeviceId dev : ring) free_at(dev) = end;
      if (step == 0) span.start = start;
      clock = end;
    }
    span.end = clock;
    spans_[node.id] = span;
  }

  std::int64_t global_batch() const {
    for (const auto& [id, node] : graph_.nodes()) {
      if (node.kind == OpKind::kInput && node.output_shape && node.output_shape->batch_axis) {
        return node.output_shape->batch();
      }
    }
    return 0;
  }

  const Graph& graph_;
  const DeviceProfile& profile_;
  std::map<NodeId, std::optional<DeviceId>> device_;
  std::set<DeviceId> used_devices_;
  std::map<NodeId, Cost> cost_;
  std::map<NodeId, std::string> variable_of_;
  std::map<DeviceId, double> device_free_;
  std::map<DeviceId, double> busy_;
  double fabric_free_ = 0.0;
  std::map<std::pair<TensorRef, DeviceId>, double> delivered_;
  std::map<NodeId, NodeSpan> spans_;
  std::vector<LinkTransfer> transfers_;
};

}  // namespace

Simulation simulate_timing(const Graph& graph, const DeviceProfile& profile) {
  const Graph shaped = infer_shapes(graph);
  return Scheduler(shaped, profile).run();
}

CommVolume comm_volume(const ExecutionTrace& trace) {
  CommVolume volume;
  for (const auto& t : trace.link_transfers) {
    volume.total_bytes += t.bytes;
    if (t.purpose.rfind("grad:", 0) == 0) {
      volume.aggregation_bytes += t.bytes;
      volume.per_variable[t.purpose.substr(5)] += t.bytes;
    }
  }
  return volume;
}

nlohmann::json trace_to_json(const ExecutionTrace& trace) {
  nlohmann::json spans = nlohmann::json::object();
  for (const auto& [id, span] : trace.node_spans) {
    spans[id] = {{"device", span.device ? nlohmann::json(*span.device) : nlohmann::json()},
                 {"start", span.start},
                 {"end", span.end}};
  }
  nlohmann::json transfers = nlohmann::json::array();
  for (const auto& t : trace.link_transfers) {
    transfers.push_back({{"src", t.src},
                         {"dst", t.dst},
                         {"bytes", t.bytes},
                         {"start", t.start},
                         {"end", t.end},
                         {"tensor", t.tensor},
                         {"purpose", t.purpose}});
  }
  return {{"step_time", trace.step_time},
          {"node_spans", std::move(spans)},
          {"link_transfers", std::move(transfers)}};
}

nlohmann::json sim_result_to_json(const SimResult& r) {
  nlohmann::json links = nlohmann::json::object();
  for (const auto& [link, bytes] : r.comm_bytes_per_link) {
    links[std::to_string(link.first) + "->" + std::to_string(link.second)] = bytes;
  }
  return {{"step_time", r.step_time},
          {"global_batch", r.global_batch},
          {"throughput", r.throughput},
          {"energy_per_step", r.energy_per_step},
          {"devices_used", r.devices_used},
          {"comm_bytes_total", r.comm_bytes_total},
          {"comm_bytes_per_link", std::move(links)}};
}

}  // namespace wap
