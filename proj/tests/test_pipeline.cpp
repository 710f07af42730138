#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vad/pipeline/config.hpp"
#include "vad/pipeline/report.hpp"
#include "vad/pipeline/runner.hpp"

using namespace vad;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.categories = {{"tiny", CategoryKind::object}};
  c.synthetic.n_train = 3;
  c.synthetic.n_test = 6;
  c.capture_timing = false;
  c.pq.K = 16;
  c.pq.max_iters = 5;
  c.pq.train_max_vectors = 512;
  c.detector.coreset_ratio = 0.05;
  c.seed = 9;
  return c;
}

const SuiteResult& small_suite() {
  static const SuiteResult s = run_suite(small_config());
  return s;
}

const ScenarioResult& row(const SuiteResult& s, const std::string& name) {
  for (const auto& r : s.scenarios)
    if (r.scenario.name == name) return r;
  throw std::runtime_error("missing " + name);
}

fs::path source_path(const std::string& rel) { return fs::path(VAD_SOURCE_DIR) / rel; }

}  // namespace

TEST(Config, DefaultsAndJsonFields) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({
    "categories": ["bottle", {"name": "wood"}, {"name": "x", "kind": "texture"}],
    "seed": 5, "pq": {"K": 64}, "device": {"comm_budget": 5000},
    "scenarios": ["original", {"name": "rs10", "strategy": "sampling", "alpha": 0.1}]
  })"));
  EXPECT_EQ(c.categories[0].kind, CategoryKind::object);
  EXPECT_EQ(c.categories[1].kind, CategoryKind::texture);
  EXPECT_EQ(c.categories[2].kind, CategoryKind::texture);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.pq.K, 64u);
  EXPECT_EQ(*c.device.comm_budget, 5000u);
  ASSERT_EQ(c.scenarios.size(), 2u);
  EXPECT_EQ(c.scenarios[1].strategy, Strategy::sampling);
  EXPECT_DOUBLE_EQ(c.scenarios[1].alpha, 0.1);
  EXPECT_EQ(RunConfig{}.resolved_scenarios().size(), 7u);
}

TEST(Config, ErrorsAreConfigErrors) {
  const char* bad[] = {
      R"({"pq": {"K": 100}})",
      R"({"categories": []})",
      R"({"scenarios": ["nope"]})",
      R"({"scenarios": [{"name": "custom"}]})",
      R"({"scenarios": [{"name": "rs", "strategy": "sampling", "alpha": 0}]})",
      R"({"scenarios": [{"name": "w", "strategy": "image_codec", "codec": "gif"}]})",
      R"({"feature_source": "magic"})",
      R"({"device": {"bandwidth_bytes_per_s": 0}})",
      R"({"seed": "abc"})",
      R"({"report_formats": ["xml"]})",
      R"([1, 2])",
  };
  for (const char* b : bad) EXPECT_THROW(run_config_from_json(nlohmann::json::parse(b)), ConfigError) << b;
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  for (const char* f : {"configs/synthetic.json", "configs/synthetic_small.json"})
    EXPECT_NO_THROW(load_run_config(source_path(f))) << f;
}

TEST(Suite, SevenRowsWithBaselineDeltaZero) {
  const auto& s = small_suite();
  ASSERT_EQ(s.scenarios.size(), 7u);
  for (const auto& r : s.scenarios) EXPECT_TRUE(r.ok) << r.scenario.name << ": " << r.error;
  EXPECT_DOUBLE_EQ(*s.latency.find("original")->delta_vs_baseline_percent, 0.0);
}

// Deflate is lossless, so the server sees the same pixels.
TEST(Suite, LosslessImageCodecMatchesOriginal) {
  const auto& s = small_suite();
  const auto& a = row(s, "original");
  const auto& b = row(s, "webp");
  EXPECT_DOUBLE_EQ(*a.metrics.aggregate().f1_pixel, *b.metrics.aggregate().f1_pixel);
  EXPECT_DOUBLE_EQ(*a.metrics.aggregate().roc_image, *b.metrics.aggregate().roc_image);
  EXPECT_LT(b.mean_payload_bytes, a.mean_payload_bytes);
}

TEST(Suite, SamplingPayloadIsQuarterPlusCoordinates) {
  const auto& s = small_suite();
  const double rs = row(s, "rs25").mean_payload_bytes;
  // Deeper layers are replicated per cell, so the base is the patch grid
  // (28 x 28 cells, d = 128 + 32 + 16), not the native-resolution tensors.
  const double cells = 28 * 28, d = 176, kept = std::ceil(0.25 * cells);
  EXPECT_DOUBLE_EQ(rs, 0.25 * cells * d * 4 + 4 * kept + 12);
  EXPECT_GT(row(s, "raw_features").mean_payload_bytes, 3 * rs);
}

// With one layer the patch grid is the raw tensor.
TEST(Stages, SingleLayerSamplingIsQuarterOfRaw) {
  FeatureStack st;
  std::vector<float> v(64 * 16 * 16);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 97);
  st.layers.emplace_back(1, 64, 16, 16, v);
  StageContext ctx;
  const double raw = edge_encode(*builtin_scenario("raw_features"), {nullptr, &st}, ctx, 1).size_bytes();
  const double rs = edge_encode(*builtin_scenario("rs25"), {nullptr, &st}, ctx, 1).size_bytes();
  EXPECT_NEAR(rs, 0.25 * raw + 4 * 64, 16.0);
}

TEST(Suite, PayloadOrdering) {
  const auto& s = small_suite();
  const double original = row(s, "original").mean_payload_bytes;
  EXPECT_EQ(original, 5.0 + 224 * 224 * 3);
  EXPECT_GE(row(s, "raw_features").mean_payload_bytes, 2 * original);
  EXPECT_LT(row(s, "rs25").mean_payload_bytes, original);
  for (const char* n : {"pq", "rs50_pq"})
    EXPECT_LE(row(s, n).mean_payload_bytes, 0.25 * row(s, "rs25").mean_payload_bytes) << n;
}

TEST(Suite, ScoresAreNormalisedPerCategory) {
  for (const auto& r : small_suite().scenarios) {
    double lo = 1, hi = 0;
    for (const auto& im : r.categories.at(0).images) {
      lo = std::min(lo, im.score);
      hi = std::max(hi, im.score);
    }
    EXPECT_DOUBLE_EQ(lo, 0.0) << r.scenario.name;
    EXPECT_DOUBLE_EQ(hi, 1.0) << r.scenario.name;
  }
}

TEST(Suite, ParallelMatchesSequential) {
  auto cfg = small_config();
  std::vector<Scenario> only = {*builtin_scenario("rs25"), *builtin_scenario("pq")};
  const auto seq = run_suite(cfg, nullptr, &only);
  cfg.parallel = true;
  cfg.workers = 4;
  const auto par = run_suite(cfg, nullptr, &only);
  EXPECT_EQ(suite_json(seq, cfg).dump(), suite_json(par, cfg).dump());
}

TEST(Suite, CommunicationBudgetFlagsLargePayloads) {
  auto cfg = small_config();
  cfg.device.comm_budget = 10'000;
  std::vector<Scenario> only = {*builtin_scenario("original"), *builtin_scenario("rs50_pq")};
  const auto s = run_suite(cfg, nullptr, &only);
  EXPECT_FALSE(s.scenarios[0].constraints.ok);
  EXPECT_TRUE(s.scenarios[1].constraints.ok);
  EXPECT_NE(tradeoff_tsv(s).find("communication budget exceeded"), std::string::npos);
}

TEST(Stages, KindMismatchIsScenarioError) {
  const auto cfg = small_config();
  DataCache cache(cfg);
  const auto& data = cache.category(cfg.categories[0]);
  const auto& s = data.test[0];
  StageContext ctx;
  const auto raw = *builtin_scenario("original");
  const auto feats = *builtin_scenario("raw_features");
  const auto p = edge_encode(raw, {&*s.image, &*s.features}, ctx, 1);
  EXPECT_THROW(server_decode(feats, serialize_payload(p), ctx), ScenarioError);
  EXPECT_THROW(edge_encode(feats, {&*s.image, nullptr}, ctx, 1), ScenarioError);
  EXPECT_THROW(edge_encode(*builtin_scenario("pq"), {&*s.image, &*s.features}, ctx, 1), ScenarioError);
}

TEST(Stages, EmbeddedCodebookDecodesWithoutSharedState) {
  const auto cfg = small_config();
  DataCache cache(cfg);
  const auto& cat = cfg.categories[0];
  const auto& s = cache.category(cat).test[0];
  StageContext edge;
  edge.codebook = cache.codebook(cat);
  auto sc = *builtin_scenario("pq");
  sc.include_codebook = true;
  const auto wire = serialize_payload(edge_encode(sc, {nullptr, &*s.features}, edge, 1));
  StageContext server;
  const auto with = server_features(server_decode(sc, wire, server), server);
  const auto shared = server_features(server_decode(*builtin_scenario("pq"),
                                                    serialize_payload(edge_encode(*builtin_scenario("pq"),
                                                                                  {nullptr, &*s.features}, edge, 1)),
                                                    edge),
                                      edge);
  EXPECT_EQ(with, shared);
}

TEST(Replay, ReferenceTableRecomputes) {
  const auto o = load_latency_overrides(source_path("data/reference_latency.json"));
  const auto rep = replay_latency(o);
  const struct {
    const char* name;
    double tx, total;
    int delta;
  } expect[] = {{"original", 0.60, 0.71, 0},   {"raw_features", 3.82, 3.94, 455}, {"webp", 0.02, 0.14, -80},
                {"rs25", 0.95, 1.10, 55},      {"pq", 0.04, 0.24, -66},           {"rs50_webp", 0.02, 0.17, -76},
                {"rs50_pq", 0.02, 0.17, -76}};
  for (const auto& e : expect) {
    const auto* r = rep.find(e.name);
    ASSERT_TRUE(r) << e.name;
    EXPECT_NEAR(r->tx_s, e.tx, 1e-9) << e.name;
    EXPECT_NEAR(round_to(r->total_s, 2), e.total, 1e-9) << e.name;
    EXPECT_NEAR(*r->delta_vs_baseline_percent, e.delta, 1.0) << e.name;
  }
}

TEST(Replay, IncompleteRowIsConfigError) {
  auto j = nlohmann::json::parse(R"({"rows": [{"name": "original", "payload_kB": 60, "server_ad_ms": 1}]})");
  EXPECT_THROW(replay_latency(latency_overrides_from_json(j)), ConfigError);
  EXPECT_THROW(latency_overrides_from_json(nlohmann::json::parse(R"({"baseline": "x"})")), ConfigError);
  EXPECT_THROW(latency_overrides_from_json(nlohmann::json::parse(R"({"rows": [{"payload_kB": 1}]})")), ConfigError);
}

TEST(Replay, UnscaledEdgeTimesAreMultiplied) {
  auto j = nlohmann::json::parse(R"({"edge_times_prescaled": false, "delta_from_rounded_totals": false, "rows": [
    {"name": "original", "payload_bytes": 0, "edge_feature_ms": 10, "edge_encode_ms": 0,
     "server_decode_ms": 0, "server_feature_ms": 0, "server_ad_ms": 0}]})");
  const auto rep = replay_latency(latency_overrides_from_json(j));
  EXPECT_DOUBLE_EQ(rep.rows[0].edge_feature_ms, 30.0);
}

TEST(Overrides, ReplaceOnlyProvidedFields) {
  LatencyOverrides all;
  all.edge_times_prescaled = false;
  LatencyOverrideRow o;
  o.name = "pq";
  o.edge_encode_ms = 20.0;
  LatencyRow r{"pq", 1, 2, 3, 4, 5, 600};
  const auto out = apply_override(r, o, all, DeviceProfile{});
  EXPECT_DOUBLE_EQ(out.edge_feature_ms, 1);
  EXPECT_DOUBLE_EQ(out.edge_encode_ms, 60);
  EXPECT_DOUBLE_EQ(out.server_ad_ms, 5);
  EXPECT_DOUBLE_EQ(out.payload_bytes, 600);
}

TEST(Reports, FilesAreWritten) {
  const auto cfg = small_config();
  const auto dir = fs::temp_directory_path() / "vad_test_reports";
  fs::remove_all(dir);
  const auto files = write_suite_reports(small_suite(), cfg, dir);
  for (const char* f : {"metrics.tsv", "latency_totals.tsv", "tradeoff.tsv", "report.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(files.empty());
  fs::remove_all(dir);
}
