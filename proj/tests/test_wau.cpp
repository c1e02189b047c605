// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "support/test_support.hpp"
#include "wap/wau.hpp"

namespace wap {
namespace {

LayerWorkload layer(std::int64_t flops, std::int64_t weight_bytes, std::int64_t batch = 64) {
  LayerWorkload l;
  l.layer = "l";
  l.flops_fwd = flops / 3;
  l.flops_bwd = flops - flops / 3;
  l.weight_bytes = weight_bytes;
  l.batch = batch;
  return l;
}

NetworkWorkload network(std::vector<LayerWorkload> layers, std::int64_t batch = 64) {
  NetworkWorkload w;
  w.global_batch = batch;
  for (auto& l : layers) w.total_weight_bytes += l.weight_bytes;
  w.layers = std::move(layers);
  return w;
}

DeviceProfile calibrated(const std::string& name) {
  return load_profile(testing::profiles_dir() / (name + ".json"));
}

TEST(ComputeTime, UnitEfficiency) {
  const auto p = testing::unit_profile();
  EXPECT_NEAR(compute_time(layer(1'000'000'000'000, 0), 4, p), 0.025, 1e-15);
}

TEST(ComputeTime, KneeExample) {
  auto p = testing::unit_profile();
  p.efficiency_knee_flops = 1e11;
  // Per-device work 5e10, eff = 5e10 / 1.5e11 = 1/3.
  EXPECT_NEAR(compute_time(layer(100'000'000'000, 0), 2, p), 0.015, 1e-15);
  // Sub-linear speedup: halving per-device work less than halves the time.
  const double t1 = compute_time(layer(100'000'000'000, 0), 1, p);
  const double t2 = compute_time(layer(100'000'000'000, 0), 2, p);
  EXPECT_GT(t1, t2);
  EXPECT_LT(t1, 2.0 * t2);
}

TEST(ComputeTime, NondivisibleBatch) {
  try {
    compute_time(layer(1000, 0, 6), 4, testing::unit_profile());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNondivisibleBatch);
  }
}

TEST(CommTime, RingAndNaiveExamples) {
  const auto p = testing::unit_profile();
  const auto l = layer(1000, 100'000'000);
  EXPECT_EQ(comm_time(l, 1, p, AggregationAlgo::kRing), 0.0);
  EXPECT_EQ(comm_time(l, 1, p, AggregationAlgo::kNaiveAllToAll), 0.0);
  EXPECT_NEAR(comm_time(l, 4, p, AggregationAlgo::kRing), 0.015, 1e-15);
  EXPECT_NEAR(comm_time(l, 4, p, AggregationAlgo::kNaiveAllToAll), 0.12, 1e-15);
}

TEST(CommTime, LatencyTerms) {
  auto p = testing::unit_profile();
  p.link_latency = 1e-3;
  p.allreduce_chunk_latency = 2e-4;
  const auto l = layer(1000, 0);
  EXPECT_NEAR(comm_time(l, 3, p, AggregationAlgo::kRing), 2 * 2 * 2e-4, 1e-15);
  EXPECT_NEAR(comm_time(l, 3, p, AggregationAlgo::kNaiveAllToAll), 1e-3, 1e-15);
}

TEST(EstimateTotal, HandSummedThreeLayers) {
  auto p = testing::unit_profile();
  p.efficiency_knee_flops = 2e9;
  p.link_bandwidth = 5e9;
  p.allreduce_chunk_latency = 1e-5;
  const std::vector<std::pair<double, double>> spec{{6e9, 4e6}, {3e9, 8e6}, {9e8, 2e5}};
  std::vector<LayerWorkload> layers;
  for (auto [f, w] : spec) layers.push_back(layer(static_cast<std::int64_t>(f), static_cast<std::int64_t>(w)));
  const auto net = network(layers);
  const auto e = estimate_total(net, 2, p, AggregationAlgo::kRing);

  double tc = 0.0, ts = 0.0;
  for (auto [f, w] : spec) {
    const double x = f / 2;
    tc += x / (1e13 * (x / (x + 2e9)));
    ts += 2.0 * w * (1.0 / 2.0) / 5e9 + 2.0 * 1e-5;
  }
  EXPECT_NEAR(e.t_c_total, tc, 1e-15);
  EXPECT_NEAR(e.t_s_total, ts, 1e-15);
  EXPECT_EQ(e.t_estimate, e.t_c_total + e.t_s_total);
  EXPECT_NEAR(e.predicted_throughput, 64 / (tc + ts), 1e-6);

  const auto empty = estimate_total(network({}), 2, p, AggregationAlgo::kRing);
  EXPECT_EQ(empty.t_estimate, 0.0);
  EXPECT_EQ(empty.predicted_throughput, 0.0);
}

TEST(SelectParallelism, ZeroCommPicksLargestDivisor) {
  const auto p = testing::unit_profile();
  EXPECT_EQ(select_parallelism(network({layer(1e9, 0)}, 64), DeviceSet::first_n(8), p).d, 8);
  // 6 devices, batch 64: valid degrees are 1, 2, 4.
  const auto plan = select_parallelism(network({layer(1e9, 0)}, 64), DeviceSet::first_n(6), p);
  EXPECT_EQ(plan.d, 4);
  EXPECT_EQ(plan.estimates.size(), 3u);
  EXPECT_EQ(plan.devices.ids(), (std::vector<DeviceId>{0, 1, 2, 3}));
}

TEST(SelectParallelism, TiesGoToSmallerDegree) {
  // Zero work, zero weights: every degree estimates 0 s.
  const auto plan =
      select_parallelism(network({layer(0, 0)}), DeviceSet::first_n(4), testing::unit_profile());
  EXPECT_EQ(plan.d, 1);
}

TEST(SelectParallelism, AlexNetLikeDecisions) {
  const auto p = calibrated("pcie-box");
  const auto small = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 128)));
  const auto big = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 2048)));
  const auto plan_small = select_parallelism(small, DeviceSet::first_n(4), p);
  const auto plan_big = select_parallelism(big, DeviceSet::first_n(4), p);
  EXPECT_EQ(plan_small.d, 1);
  EXPECT_EQ(plan_big.d, 4);
  // Independent sweep through estimate_total.
  for (const auto* w : {&small, &big}) {
    int best = 1;
    double best_t = estimate_total(*w, 1, p, AggregationAlgo::kRing).t_estimate;
    for (int d : {2, 4}) {
      const double t = estimate_total(*w, d, p, AggregationAlgo::kRing).t_estimate;
      if (t < best_t) best = d, best_t = t;
    }
    EXPECT_EQ(select_parallelism(*w, DeviceSet::first_n(4), p).d, best);
  }
  EXPECT_GT(plan_small.estimates[0].predicted_throughput,
            plan_small.estimates[2].predicted_throughput);
}

TEST(SelectParallelism, ArgminInvariantUnderTimeScaling) {
  auto p = calibrated("pcie-box");
  const auto w = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 512)));
  const int d = select_parallelism(w, DeviceSet::first_n(4), p).d;
  const double factor = 3.0;
  p.peak_flops /= factor;
  p.link_bandwidth /= factor;
  p.link_latency *= factor;
  p.allreduce_chunk_latency *= factor;
  EXPECT_EQ(select_parallelism(w, DeviceSet::first_n(4), p).d, d);
}

TEST(SelectParallelism, MoreBandwidthNeverSlower) {
  auto p = calibrated("pcie-box");
  const auto w = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 512)));
  auto q = p;
  q.link_bandwidth *= 4.0;
  for (int d : {1, 2, 4}) {
    EXPECT_LE(estimate_total(w, d, q, AggregationAlgo::kRing).t_estimate,
              estimate_total(w, d, p, AggregationAlgo::kRing).t_estimate);
  }
}

TEST(ForcedPlan, KeepsEstimatesAndDegree) {
  const auto p = calibrated("pcie-box");
  const auto w = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 128)));
  const auto plan = forced_plan(w, DeviceSet::first_n(4), p, 4);
  EXPECT_EQ(plan.d, 4);
  EXPECT_EQ(plan.chosen().d, 4);
  EXPECT_EQ(plan.estimates.size(), 3u);  // 1, 2, 4 divide 128; 3 does not
  EXPECT_THROW(forced_plan(w, DeviceSet::first_n(4), p, 3), Error);
}

TEST(EstimatePower, FullUtilizationAndCalibratedRatio) {
  auto p = testing::unit_profile();
  const auto net = network({layer(1e9, 0)});
  const auto plan = forced_plan(net, DeviceSet::first_n(1), p, 1);
  EXPECT_NEAR(estimate_power(plan, net, p), p.host_power + p.power_peak, 1e-9);

  const auto cal = calibrated("pcie-box");
  const auto w = extract_workloads(infer_shapes(build_model(alexnet_like_spec(), 128)));
  const double p1 = estimate_power(forced_plan(w, DeviceSet::first_n(4), cal, 1), w, cal);
  const double p4 = estimate_power(forced_plan(w, DeviceSet::first_n(4), cal, 4), w, cal);
  EXPECT_LE(p1, 0.5 * p4);
  // Bounds: host + d * [idle, peak].
  EXPECT_GE(p4, cal.host_power + 4 * cal.power_idle);
  EXPECT_LE(p4, cal.host_power + 4 * cal.power_peak);
}

TEST(Profile, JsonRoundTripAndValidation) {
  const auto p = calibrated("pcie-box");
  EXPECT_EQ(p.name, "pcie-box");
  const auto back = profile_from_json(profile_to_json(p));
  EXPECT_EQ(profile_to_json(back), profile_to_json(p));
  auto doc = profile_to_json(p);
  doc["peak_flops"] = -1.0;
  EXPECT_THROW(profile_from_json(doc), Error);
  doc = profile_to_json(p);
  doc.erase("link_bandwidth");
  EXPECT_THROW(profile_from_json(doc), Error);
  EXPECT_DOUBLE_EQ(p.efficiency(p.efficiency_knee_flops), 0.5);
  EXPECT_EQ(testing::unit_profile().efficiency(1.0), 1.0);
}

}  // namespace
}  // namespace wap
