#include <gtest/gtest.h>

#include "vad/channel.hpp"

using namespace vad;

TEST(TxTime, HundredKilobytesPerSecond) {
  DeviceProfile p;
  EXPECT_NEAR(tx_time(60'000, p), 0.60, 1e-12);
  EXPECT_NEAR(tx_time(382'000, p), 3.82, 1e-12);
  EXPECT_EQ(tx_time(0, p), 0.0);
  EXPECT_THROW(tx_time(-1, p), InvalidArgument);
}

TEST(EdgeScale, TimesCpuScale) {
  DeviceProfile p;
  EXPECT_DOUBLE_EQ(scale_edge_time(5.0, p), 15.0);
  EXPECT_NEAR(scale_edge_time(3.03, p), 9.09, 1e-12);
  EXPECT_THROW(scale_edge_time(-0.1, p), InvalidArgument);
}

TEST(TotalTime, HandSums) {
  LatencyRow webp{"webp", 0, 9.1, 0.1, 0.6, 109.5, 2000};
  webp.tx_s = tx_time(webp.payload_bytes, DeviceProfile{});
  EXPECT_NEAR(total_time(webp), 0.0091 + 0.02 + 0.1102, 1e-12);
  EXPECT_NEAR(round_to(total_time(webp), 2), 0.14, 1e-12);

  LatencyRow pq{"pq", 30.0, 60.0, 0.15, 0, 106.8, 4000};
  pq.tx_s = tx_time(pq.payload_bytes, DeviceProfile{});
  EXPECT_NEAR(total_time(pq), 0.09 + 0.04 + 0.10695, 1e-12);
  EXPECT_NEAR(round_to(total_time(pq), 2), 0.24, 1e-12);

  pq.server_ad_ms = -1;
  EXPECT_THROW(total_time(pq), InvalidArgument);
}

TEST(LatencyReport, DeltasAgainstBaseline) {
  std::vector<LatencyRow> rows = {{"original", 0, 0, 0, 0.74, 109.4, 60'000}, {"webp", 0, 9.1, 0.1, 0.6, 109.5, 2000}};
  LatencyOptions o;
  o.delta_from_rounded_totals = true;
  const auto rep = build_latency_report(rows, DeviceProfile{}, o);
  EXPECT_DOUBLE_EQ(*rep.find("original")->delta_vs_baseline_percent, 0.0);
  // 0.14 vs 0.71
  EXPECT_NEAR(*rep.find("webp")->delta_vs_baseline_percent, 100.0 * (0.14 - 0.71) / 0.71, 1e-9);
  EXPECT_EQ(format_delta_percent(rep.find("webp")->delta_vs_baseline_percent), "-80%");
  EXPECT_EQ(format_delta_percent(rep.find("original")->delta_vs_baseline_percent), "0%");
}

TEST(LatencyReport, ScaleEdgeOption) {
  std::vector<LatencyRow> rows = {{"a", 10, 5, 0, 0, 0, 0}};
  LatencyOptions o;
  o.baseline = "a";
  o.scale_edge = true;
  const auto rep = build_latency_report(rows, DeviceProfile{}, o);
  EXPECT_DOUBLE_EQ(rep.rows[0].edge_feature_ms, 30.0);
  EXPECT_DOUBLE_EQ(rep.rows[0].edge_encode_ms, 15.0);
  EXPECT_NEAR(rep.rows[0].total_s, 0.045, 1e-12);
}

TEST(LatencyReport, MissingBaselineLeavesDeltasEmpty) {
  const auto rep = build_latency_report({{"x", 0, 0, 0, 0, 1, 10}}, DeviceProfile{}, {});
  EXPECT_FALSE(rep.rows[0].delta_vs_baseline_percent);
  EXPECT_EQ(format_delta_percent(std::nullopt), "-");
}

TEST(FormatDelta, SignAndRounding) {
  EXPECT_EQ(format_delta_percent(455.2), "+455%");
  EXPECT_EQ(format_delta_percent(-66.4), "-66%");
  EXPECT_EQ(format_delta_percent(0.3), "0%");
}

TEST(Constraints, AbsentBudgetsPass) {
  EXPECT_TRUE(check_constraints(1e9, 1e9, DeviceProfile{}).ok);
}

TEST(Constraints, ViolationsAreReported) {
  DeviceProfile p;
  p.compute_budget = 5e6;
  p.comm_budget = 10'000;
  EXPECT_TRUE(check_constraints(3.5e6, 4000, p).ok);
  const auto c = check_constraints(2.5e7, 150'000, p);
  ASSERT_FALSE(c.ok);
  ASSERT_EQ(c.violations.size(), 2u);
  EXPECT_EQ(c.violations[0].kind, ConstraintViolation::Kind::compute);
  EXPECT_EQ(c.violations[1].kind, ConstraintViolation::Kind::communication);
  EXPECT_NE(describe(c.violations[1]).find("communication"), std::string::npos);
}

TEST(DeviceProfile, Validation) {
  DeviceProfile p;
  p.bandwidth_bytes_per_s = 0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.cpu_scale = -1;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(LatencyTables, Format) {
  const auto rep = build_latency_report({{"original", 0, 0, 0, 0.74, 109.4, 60'000}}, DeviceProfile{}, {});
  EXPECT_EQ(latency_totals_tsv(rep), "method\tpayload_kB\ttx_s\ttotal_s\tdelta_time\noriginal\t60.000\t0.60\t0.71\t0%\n");
  EXPECT_NE(latency_components_tsv(rep).find("original\t0.00\t0.00\t0.00\t0.74\t109.40\t110.14\n"), std::string::npos);
}
