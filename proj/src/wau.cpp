// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/wau.hpp"

#include <algorithm>

#include "wap/graph_io.hpp"

namespace wap {

double DeviceProfile::efficiency(double work_flops) const {
  if (efficiency_knee_flops == 0.0) return 1.0;
  return work_flops / (work_flops + efficiency_knee_flops);
}

namespace {

struct ProfileField {
  const char* key;
  double DeviceProfile::*member;
  bool allow_zero;
};

constexpr ProfileField kProfileFields[] = {
    {"peak_flops", &DeviceProfile::peak_flops, false},
    {"efficiency_knee_flops", &DeviceProfile::efficiency_knee_flops, true},
    {"link_bandwidth", &DeviceProfile::link_bandwidth, false},
    {"link_latency", &DeviceProfile::link_latency, true},
    {"allreduce_chunk_latency", &DeviceProfile::allreduce_chunk_latency, true},
    {"power_idle", &DeviceProfile::power_idle, true},
    {"power_peak", &DeviceProfile::power_peak, false},
    {"host_power", &DeviceProfile::host_power, true},
};

void check_divisible(std::int64_t batch, int d, const std::string& what) {
  if (d < 1) {
    throw Error(ErrorCode::kPrecondition, "degree must be >= 1, got " + std::to_string(d));
  }
  if (batch % d != 0) {
    throw Error(ErrorCode::kNondivisibleBatch,
                what + ": batch " + std::to_string(batch) + " is not divisible by d=" +
                    std::to_string(d));
  }
}

}  // namespace

DeviceProfile profile_from_json(const nlohmann::json& doc, const std::string& where) {
  const std::string prefix = where.empty() ? "" : where + ": ";
  if (!doc.is_object()) throw Error(ErrorCode::kParse, prefix + "profile must be an object");
  DeviceProfile profile;
  for (const auto& item : doc.items()) {
    const bool known =
        item.key() == "name" ||
        std::any_of(std::begin(kProfileFields), std::end(kProfileFields),
                    [&](const ProfileField& f) { return item.key() == f.key; });
    if (!known) {
      throw Error(ErrorCode::kParse, prefix + "unknown profile field '" + item.key() + "'");
    }
  }
  if (!doc.contains("name") || !doc["name"].is_string()) {
    throw Error(ErrorCode::kParse, prefix + "name: expected a string");
  }
  profile.name = doc["name"].get<std::string>();
  for (const auto& field : kProfileFields) {
    if (!doc.contains(field.key) || !doc[field.key].is_number()) {
      throw Error(ErrorCode::kParse,
                  prefix + field.key + ": expected a number");
    }
    const double value = doc[field.key].get<double>();
    if (value < 0.0 || (!field.allow_zero && value == 0.0)) {
      throw Error(ErrorCode::kParse, prefix + field.key + ": must be " +
                                         (field.allow_zero ? "non-negative" : "positive"));
    }
    profile.*field.member = value;
  }
  if (profile.power_peak < profile.power_idle) {
    throw Error(ErrorCode::kParse, prefix + "power_peak must be >= power_idle");
  }
  return profile;
}

nlohmann::json profile_to_json(const DeviceProfile& profile) {
  nlohmann::json doc{{"name", profile.name}};
  for (const auto& field : kProfileFields) doc[field.key] = profile.*field.member;
  return doc;
}

DeviceProfile load_profile(const std::filesystem::path& path) {
  return profile_from_json(parse_json_text(read_text_file(path), path.string()),
                           path.string());
}

std::string_view to_string(AggregationAlgo algo) {
  return algo == AggregationAlgo::kRing ? "ring" : "naive";
}

double compute_time(const LayerWorkload& layer, int d, const DeviceProfile& profile) {
  check_divisible(layer.batch, d, "layer '" + layer.layer + "'");
  const double work = static_cast<double>(layer.flops_total()) / d;
  if (work == 0.0) return 0.0;
  return work / (profile.peak_flops * profile.efficiency(work));
}

double comm_time(const LayerWorkload& layer, int d, const DeviceProfile& profile,
                 AggregationAlgo algo) {
  if (d < 1) {
    throw Error(ErrorCode::kPrecondition, "degree must be >= 1, got " + std::to_string(d));
  }
  if (d == 1) return 0.0;
  const double w = static_cast<double>(layer.weight_bytes);
  const double n = d;
  if (algo == AggregationAlgo::kRing) {
    return 2.0 * w * (n - 1.0) / n / profile.link_bandwidth +
           2.0 * (n - 1.0) * profile.allreduce_chunk_latency;
  }
  return w * (n - 1.0) * n / profile.link_bandwidth + profile.link_latency;
}

CostEstimate estimate_total(const NetworkWorkload& workload, int d,
                            const DeviceProfile& profile, AggregationAlgo algo) {
  check_divisible(workload.global_batch == 0 ? d : workload.global_batch, d, "network");
  CostEstimate estimate;
  estimate.d = d;
  for (const auto& layer : workload.layers) {
    estimate.t_c_total += compute_time(layer, d, profile);
    estimate.t_s_total += comm_time(layer, d, profile, algo);
  }
  estimate.t_estimate = estimate.t_c_total + estimate.t_s_total;
  estimate.predicted_throughput =
      estimate.t_estimate > 0.0
          ? static_cast<double>(workload.global_batch) / estimate.t_estimate
          : 0.0;
  return estimate;
}

const CostEstimate& ParallelPlan::chosen() const {
  for (const auto& e : estimates) {
    if (e.d == d) return e;
  }
  throw Error(ErrorCode::kPrecondition,
              "plan has no estimate for d=" + std::to_string(d));
}

namespace {

ParallelPlan sweep(const NetworkWorkload& workload, const DeviceSet& devices,
                   const DeviceProfile& profile, AggregationAlgo algo) {
  ParallelPlan plan;
  plan.algo = algo;
  const int max_d = static_cast<int>(devices.size());
  for (int d = 1; d <= max_d; ++d) {
    if (workload.global_batch != 0 && workload.global_batch % d != 0) continue;
    plan.estimates.push_back(estimate_total(workload, d, profile, algo));
  }
  return plan;
}

}  // namespace

ParallelPlan select_parallelism(const NetworkWorkload& workload, const DeviceSet& devices,
                                const DeviceProfile& profile, AggregationAlgo algo) {
  ParallelPlan plan = sweep(workload, devices, profile, algo);
  const CostEstimate* best = &plan.estimates.front();  // d = 1 always divides
  for (const auto& e : plan.estimates) {
    if (e.t_estimate < best->t_estimate) best = &e;
  }
  plan.d = best->d;
  plan.devices = devices.prefix(static_cast<std::size_t>(plan.d));
  plan.predicted_power = estimate_power(plan, workload, profile);
  return plan;
}

ParallelPlan forced_plan(const NetworkWorkload& workload, const DeviceSet& devices,
                         const DeviceProfile& profile, int d, AggregationAlgo algo) {
  if (d < 1 || d > static_cast<int>(devices.size())) {
    throw Error(ErrorCode::kPrecondition,
                "forced degree " + std::to_string(d) + " outside [1, " +
                    std::to_string(devices.size()) + "]");
  }
  check_divisible(workload.global_batch, d, "network");
  ParallelPlan plan = sweep(workload, devices, profile, algo);
  plan.d = d;
  plan.devices = devices.prefix(static_cast<std::size_t>(d));
  plan.predicted_power = estimate_power(plan, workload, profile);
  return plan;
}

ParallelPlan plan_for_degree(int d, const DeviceSet& devices) {
  ParallelPlan plan;
  plan.d = d;
  plan.devices = devices.prefix(static_cast<std::size_t>(d));
  return plan;
}

double estimate_power(const ParallelPlan& plan, const NetworkWorkload& workload,
                      const DeviceProfile& profile) {
  if (plan.d < 1) {
    throw Error(ErrorCode::kPrecondition, "power estimate needs d >= 1");
  }
  const CostEstimate& e = plan.chosen();
  const double busy = e.t_estimate > 0.0 ? e.t_c_total / e.t_estimate : 0.0;
  const double per_device_work = static_cast<double>(workload.total_flops()) / plan.d;
  const double utilization =
      per_device_work > 0.0 ? busy * profile.efficiency(per_device_work) : 0.0;
  return profile.host_power +
         plan.d * (profile.power_idle +
                   (profile.power_peak - profile.power_idle) * utilization);
}

nlohmann::json plan_to_json(const ParallelPlan& plan) {
  nlohmann::json estimates = nlohmann::json::array();
  for (const auto& e : plan.estimates) {
    estimates.push_back({{"d", e.d},
                         {"t_c_total", e.t_c_total},
                         {"t_s_total", e.t_s_total},
                         {"t_estimate", e.t_estimate},
                         {"predicted_throughput", e.predicted_throughput}});
  }
  return {{"d", plan.d},
          {"devices", plan.devices.ids()},
          {"algo", std::string(to_string(plan.algo))},
          {"predicted_power", plan.predicted_power},
          {"estimates", std::move(estimates)}};
}

}  // namespace wap
