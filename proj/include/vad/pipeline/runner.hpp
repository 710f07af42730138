#pragma once

// End-to-end scenario evaluation: every training and test image goes
// through edge_encode -> serialized bytes -> server_decode, the memory bank
// is built from the decoded training features, and the test split is scored.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vad/channel.hpp"
#include "vad/codecs.hpp"
#include "vad/core_model.hpp"
#include "vad/data_io.hpp"
#include "vad/detector.hpp"
#include "vad/metrics.hpp"
#include "vad/pipeline/config.hpp"
#include "vad/pipeline/scenario.hpp"
#include "vad/pq.hpp"
#include "vad/random.hpp"
#include "vad/synthetic.hpp"

namespace vad {

struct Sample {
  std::string id;
  Label label = Label::normal;
  std::optional<FeatureStack> features;
  std::optional<Image8> image;
  std::optional<Image8> mask;
};

struct CategoryData {
  CategorySpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

inline CategoryData synthetic_category(const RunConfig& cfg, const CategorySpec& cat) {
  SyntheticSpec spec;
  spec.category = cat.name;
  spec.kind = cat.kind;
  spec.image_side = cfg.image_side;
  spec.delta_sigma = cfg.synthetic.delta_sigma;
  spec.noise_std = cfg.synthetic.noise_std;
  auto gen = generate_synthetic(spec, cfg.synthetic.n_train, cfg.synthetic.n_test, cfg.synthetic.anomaly_fraction,
                                cfg.seed);
  CategoryData out{cat, {}, {}};
  auto convert = [](SyntheticSample& s) {
    Sample x;
    x.id = s.stack.image_id;
    x.label = s.stack.label;
    x.mask = std::move(s.stack.mask);
    s.stack.mask.reset();
    x.features = std::move(s.stack);
    x.image = std::move(s.image);
    return x;
  };
  for (auto& s : gen.train) out.train.push_back(convert(s));
  for (auto& s : gen.test) out.test.push_back(convert(s));
  return out;
}

inline CategoryData prepared_category(const RunConfig& cfg, const CategorySpec& cat, const PreparedIndex& index) {
  const PreparedCategory* pc = nullptr;
  for (const auto& c : index.categories)
    if (c.name == cat.name) pc = &c;
  if (!pc) throw ScenarioError("category " + cat.name + " is not listed in " + (cfg.dataset_root / "index.json").string());
  CategoryData out{cat, {}, {}};
  auto load = [&](const PreparedEntry& e) {
    Sample s;
    s.id = e.id;
    s.label = e.label;
    if (!e.features.empty()) {
      auto f = load_feature_file(cfg.dataset_root / e.features);
      f.stack.mask.reset();
      s.features = std::move(f.stack);
    }
    if (!e.image.empty()) s.image = load_raw_image(cfg.dataset_root / e.image);
    if (!e.mask.empty()) s.mask = load_raw_image(cfg.dataset_root / e.mask);
    return s;
  };
  for (const auto& e : pc->train) out.train.push_back(load(e));
  for (const auto& e : pc->test) out.test.push_back(load(e));
  if (out.train.empty()) throw ScenarioError("category " + cat.name + " has no training images");
  return out;
}

// Loads each category once and trains each codebook once per suite.
class DataCache {
 public:
  explicit DataCache(const RunConfig& cfg) : cfg_(cfg) {}

  const CategoryData& category(const CategorySpec& cat) {
    auto it = data_.find(cat.name);
    if (it != data_.end()) return it->second;
    CategoryData d;
    if (cfg_.feature_source == FeatureSource::synthetic) {
      d = synthetic_category(cfg_, cat);
    } else {
      if (!index_) index_ = load_prepared_index(cfg_.dataset_root);
      d = prepared_category(cfg_, cat, *index_);
    }
    return data_.emplace(cat.name, std::move(d)).first->second;
  }

  // Offline codebook trained on the raw patch vectors of the normal split.
  std::shared_ptr<const Codebook> codebook(const CategorySpec& cat) {
    auto it = codebooks_.find(cat.name);
    if (it != codebooks_.end()) return it->second;
    const auto& d = category(cat);
    std::vector<PatchGrid> grids;
    for (const auto& s : d.train) {
      if (!s.features) throw ScenarioError("codebook training for " + cat.name + " needs edge features");
      grids.push_back(build_patch_grid(*s.features));
    }
    const std::uint32_t dim = grids.front().dim();
    std::size_t total = 0;
    for (const auto& g : grids) total += g.size();
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    const std::size_t keep = std::min(total, std::max<std::size_t>(cfg_.pq.train_max_vectors, cfg_.pq.K));
    Rng rng(derive_seed(cfg_.seed, detail::name_hash("pq-train/" + cat.name)));
    for (std::size_t i = 0; i < keep; ++i) std::swap(order[i], order[i + rng.below(total - i)]);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    FloatMatrix train(keep, dim);
    std::size_t gi = 0, base = 0;
    for (std::size_t k = 0; k < keep; ++k) {
      while (order[k] >= base + grids[gi].size()) base += grids[gi++].size();
      auto v = grids[gi].vector(order[k] - base);
      std::copy(v.begin(), v.end(), train.row(k).begin());
    }
    if (dim % cfg_.pq.m != 0)
      throw ScenarioError("pq.m = " + std::to_string(cfg_.pq.m) + " does not divide patch d = " + std::to_string(dim));
    PqTrainOptions opt{cfg_.pq.m, cfg_.pq.K, cfg_.pq.max_iters, derive_seed(cfg_.seed, detail::name_hash("pq/" + cat.name))};
    auto cb = std::make_shared<const Codebook>(pq_train(train.view(), opt));
    codebooks_.emplace(cat.name, cb);
    return cb;
  }

 private:
  const RunConfig& cfg_;
  std::optional<PreparedIndex> index_;
  std::map<std::string, CategoryData> data_;
  std::map<std::string, std::shared_ptr<const Codebook>> codebooks_;
};

struct ImageOutcome {
  std::string id;
  Label label = Label::normal;
  double raw_score = 0.0;
  double score = 0.0;  // min-max normalised over the category's test split
  std::uint64_t payload_bytes = 0;
};

struct CategoryOutcome {
  std::string category;
  double mean_payload_bytes = 0.0;
  std::vector<ImageOutcome> images;
};

struct ScenarioResult {
  Scenario scenario;
  bool ok = true;
  std::string error;
  MetricReport metrics;
  LatencyRow latency;  // per-image means; edge parts as measured on this host
  double mean_payload_bytes = 0.0;
  ConstraintCheck constraints;
  std::vector<CategoryOutcome> categories;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct ImageRun {
  PatchGrid grid;
  std::uint64_t payload_bytes = 0;
  double edge_encode_ms = 0.0, decode_ms = 0.0, feature_ms = 0.0;
};

inline ImageRun run_one(const Scenario& sc, const Sample& s, const StageContext& ctx, std::uint64_t seed, bool timed) {
  ImageRun r;
  EdgeInput in{s.image ? &*s.image : nullptr, s.features ? &*s.features : nullptr};
  auto t0 = Clock::now();
  const Payload p = edge_encode(sc, in, ctx, seed);
  const Bytes wire = serialize_payload(p);
  if (timed) r.edge_encode_ms = ms_since(t0);
  r.payload_bytes = measure_payload(p);
  t0 = Clock::now();
  auto decoded = server_decode(sc, wire, ctx);
  if (timed) r.decode_ms = ms_since(t0);
  t0 = Clock::now();
  r.grid = server_features(std::move(decoded), ctx);
  if (timed) r.feature_ms = ms_since(t0);
  return r;
}

template <typename Fn>
void for_each_index(std::size_t n, bool parallel, int workers, Fn&& fn) {
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  unsigned w = workers > 0 ? static_cast<unsigned>(workers) : std::max(1u, std::thread::hardware_concurrency());
  w = static_cast<unsigned>(std::min<std::size_t>(w, n));
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline bool codecs_thread_safe(const Scenario& sc, const StageContext& ctx) {
  if (!uses_codec(sc.strategy)) return true;
  return ctx.codecs->by_name(sc.codec)->thread_safe();
}

}  // namespace detail

// Seed of the random-sampling draw for one image.
inline std::uint64_t image_seed(std::uint64_t base, const std::string& category, const std::string& split,
                                std::size_t index) {
  return derive_seed(derive_seed(base, detail::name_hash(category + "/" + split)), index);
}

inline ScenarioResult run_scenario(const Scenario& sc, const RunConfig& cfg, DataCache& cache) {
  sc.validate();
  ScenarioResult res;
  res.scenario = sc;
  res.metrics.scenario = sc.name;
  res.latency.name = sc.name;
  const bool timed = cfg.capture_timing && !cfg.parallel;

  double sum_payload = 0.0, n_payload = 0.0;
  double sum_encode = 0.0, sum_decode = 0.0, sum_feature = 0.0, sum_ad = 0.0;
  std::size_t n_timed = 0;

  for (const auto& cat : cfg.categories) {
    const auto& data = cache.category(cat);
    if (data.test.empty()) throw ScenarioError("category " + cat.name + " has no test images");
    StageContext ctx;
    if (uses_pq(sc.strategy)) ctx.codebook = cache.codebook(cat);
    const bool parallel = cfg.parallel && detail::codecs_thread_safe(sc, ctx);

    std::vector<PatchGrid> train_grids(data.train.size());
    detail::for_each_index(data.train.size(), parallel, cfg.workers, [&](std::size_t i) {
      train_grids[i] =
          detail::run_one(sc, data.train[i], ctx, image_seed(cfg.seed, cat.name, "train", i), false).grid;
    });
    const MemoryBank bank = build_memory_bank(train_grids, cfg.detector.coreset_ratio,
                                              derive_seed(cfg.seed, detail::name_hash("bank/" + cat.name)));

    std::vector<detail::ImageRun> runs(data.test.size());
    std::vector<AnomalyResult> results(data.test.size());
    std::vector<double> ad_ms(data.test.size(), 0.0);
    detail::for_each_index(data.test.size(), parallel, cfg.workers, [&](std::size_t i) {
      const auto& s = data.test[i];
      runs[i] = detail::run_one(sc, s, ctx, image_seed(cfg.seed, cat.name, "test", i), timed);
      DetectOptions opt;
      opt.out_h = s.mask ? s.mask->height : (s.image ? s.image->height : cfg.image_side);
      opt.out_w = s.mask ? s.mask->width : (s.image ? s.image->width : cfg.image_side);
      opt.sigma = cfg.detector.sigma;
      const auto t0 = detail::Clock::now();
      results[i] = detect(bank, runs[i].grid, opt, s.id);
      if (timed) ad_ms[i] = detail::ms_since(t0);
    });

    CategoryOutcome co;
    co.category = cat.name;
    std::vector<std::uint8_t> labels;
    std::vector<double> raw;
    for (std::size_t i = 0; i < results.size(); ++i) {
      labels.push_back(data.test[i].label == Label::anomalous ? 1 : 0);
      raw.push_back(results[i].image_score);
    }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double mn = *lo, span = *hi - *lo;
    std::vector<double> scores;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double p = span > 0.0 ? (raw[i] - mn) / span : 0.0;
      scores.push_back(p);
      co.images.push_back({data.test[i].id, data.test[i].label, raw[i], p, runs[i].payload_bytes});
      co.mean_payload_bytes += static_cast<double>(runs[i].payload_bytes);
      sum_payload += static_cast<double>(runs[i].payload_bytes);
      n_payload += 1.0;
      sum_encode += runs[i].edge_encode_ms;
      sum_decode += runs[i].decode_ms;
      sum_feature += runs[i].feature_ms;
      sum_ad += ad_ms[i];
      ++n_timed;
    }
    co.mean_payload_bytes /= static_cast<double>(results.size());

    CategoryMetrics cm;
    cm.category = cat.name;
    cm.kind = cat.kind;
    cm.roc_image = roc_auc(labels, scores);
    std::vector<Image8> masks;
    std::vector<FloatMatrix> maps;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& m = results[i].anomaly_map;
      if (data.test[i].mask) masks.push_back(*data.test[i].mask);
      else masks.emplace_back(static_cast<int>(m.rows), static_cast<int>(m.cols), 1);
      maps.push_back(std::move(results[i].anomaly_map));
    }
    const auto f1 = pixel_f1_best(masks, maps);
    cm.f1_pixel = f1.f1;
    cm.f1_threshold = f1.threshold;
    res.metrics.rows.push_back(cm);
    res.categories.push_back(std::move(co));
  }

  res.mean_payload_bytes = n_payload > 0 ? sum_payload / n_payload : 0.0;
  const double n = n_timed > 0 ? static_cast<double>(n_timed) : 1.0;
  res.latency.payload_bytes = res.mean_payload_bytes;
  res.latency.edge_feature_ms = 0.0;  // features arrive precomputed; no CNN runs here
  res.latency.edge_encode_ms = sum_encode / n;
  if (uses_edge_features(sc.strategy)) {
    res.latency.server_decode_ms = (sum_decode + sum_feature) / n;
  } else {
    res.latency.server_decode_ms = sum_decode / n;
    res.latency.server_feature_ms = sum_feature / n;
  }
  res.latency.server_ad_ms = sum_ad / n;
  res.constraints = check_constraints(sc.edge_model_params, res.mean_payload_bytes, cfg.device);
  return res;
}

struct SuiteResult {
  std::vector<ScenarioResult> scenarios;
  LatencyReport latency;
};

struct LatencyOverrideRow {
  std::string name;
  std::optional<double> payload_bytes;
  std::optional<double> edge_feature_ms, edge_encode_ms, server_decode_ms, server_feature_ms, server_ad_ms;

  bool complete() const {
    return payload_bytes && edge_feature_ms && edge_encode_ms && server_decode_ms && server_feature_ms && server_ad_ms;
  }
};

struct LatencyOverrides {
  std::string baseline = "original";
  bool edge_times_prescaled = true;
  bool delta_from_rounded_totals = true;
  std::optional<double> bandwidth_bytes_per_s;
  std::optional<double> cpu_scale;
  std::vector<LatencyOverrideRow> rows;

  const LatencyOverrideRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
};

// Applies provided override fields; edge fields are scaled unless prescaled.
inline LatencyRow apply_override(LatencyRow row, const LatencyOverrideRow& o, const LatencyOverrides& all,
                                 const DeviceProfile& profile) {
  auto edge = [&](double v) { return all.edge_times_prescaled ? v : scale_edge_time(v, profile); };
  if (o.payload_bytes) row.payload_bytes = *o.payload_bytes;
  if (o.edge_feature_ms) row.edge_feature_ms = edge(*o.edge_feature_ms);
  if (o.edge_encode_ms) row.edge_encode_ms = edge(*o.edge_encode_ms);
  if (o.server_decode_ms) row.server_decode_ms = *o.server_decode_ms;
  if (o.server_feature_ms) row.server_feature_ms = *o.server_feature_ms;
  if (o.server_ad_ms) row.server_ad_ms = *o.server_ad_ms;
  return row;
}

// Runs every configured scenario; a failing scenario is recorded and the
// suite carries on.
inline SuiteResult run_suite(const RunConfig& cfg, const LatencyOverrides* overrides = nullptr,
                             const std::vector<Scenario>* only = nullptr) {
  cfg.validate();
  const auto scenarios = only ? *only : cfg.resolved_scenarios();
  if (scenarios.empty()) throw ConfigError("no scenarios to run");
  DataCache cache(cfg);
  SuiteResult out;
  std::vector<LatencyRow> rows;
  for (const auto& sc : scenarios) {
    ScenarioResult r;
    try {
      r = run_scenario(sc, cfg, cache);
    } catch (const Error& e) {
      r = ScenarioResult{};
      r.scenario = sc;
      r.ok = false;
      r.error = e.what();
      r.metrics.scenario = sc.name;
      r.latency.name = sc.name;
    }
    LatencyRow row = r.latency;
    row.edge_feature_ms = scale_edge_time(row.edge_feature_ms, cfg.device);
    row.edge_encode_ms = scale_edge_time(row.edge_encode_ms, cfg.device);
    if (overrides)
      if (const auto* o = overrides->find(sc.name)) row = apply_override(row, *o, *overrides, cfg.device);
    rows.push_back(row);
    out.scenarios.push_back(std::move(r));
  }
  LatencyOptions lo;
  lo.baseline = cfg.baseline;
  lo.scale_edge = false;
  lo.delta_from_rounded_totals = false;
  out.latency = build_latency_report(std::move(rows), cfg.device, lo);
  out.latency.edge_scaled = true;
  return out;
}

}  // namespace vad
