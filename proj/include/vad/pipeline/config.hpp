#pragma once

// Run configuration, loaded from a JSON file. See configs/README.md for
// the schema; every key is optional and falls back to the defaults below.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vad/channel.hpp"
#include "vad/errors.hpp"
#include "vad/metrics.hpp"
#include "vad/pipeline/scenario.hpp"
#include "vad/synthetic.hpp"

namespace vad {

enum class FeatureSource { synthetic, prepared };

struct CategorySpec {
  std::string name;
  CategoryKind kind = CategoryKind::object;
};

struct SyntheticConfig {
  int n_train = 20;
  int n_test = 40;
  double anomaly_fraction = 0.5;
  double delta_sigma = 6.0;
  double noise_std = 0.1;
};

struct DetectorConfig {
  double coreset_ratio = 0.01;
  double sigma = 4.0;
};

struct PqConfig {
  std::uint32_t m = 8;
  std::uint32_t K = 256;
  std::uint32_t max_iters = 20;
  std::size_t train_max_vectors = 4096;
};

struct RunConfig {
  FeatureSource feature_source = FeatureSource::synthetic;
  std::filesystem::path dataset_root;
  std::vector<CategorySpec> categories = {{"synth_object", CategoryKind::object},
                                          {"synth_texture", CategoryKind::texture}};
  SyntheticConfig synthetic;
  DeviceProfile device;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "vad_out";
  std::vector<std::string> report_formats = {"tsv", "json"};
  bool capture_timing = true;
  bool parallel = false;
  int workers = 0;  // 0: hardware concurrency
  DetectorConfig detector;
  PqConfig pq;
  int image_side = 224;
  std::string image_codec = "deflate";
  std::string feature_codec = "jpeg";
  int quality = 80;
  std::vector<Scenario> scenarios;  // empty: the seven built-ins
  std::string baseline = "original";

  std::vector<Scenario> resolved_scenarios() const {
    if (!scenarios.empty()) return scenarios;
    std::vector<Scenario> out;
    for (const auto& n : builtin_scenario_names()) out.push_back(*builtin_scenario(n, image_codec, feature_codec, quality));
    return out;
  }

  std::optional<Scenario> find_scenario(const std::string& name) const {
    for (const auto& s : resolved_scenarios())
      if (s.name == name) return s;
    return builtin_scenario(name, image_codec, feature_codec, quality);
  }

  void validate() const {
    if (categories.empty()) throw ConfigError("config: categories must not be empty");
    if (feature_source == FeatureSource::prepared && !std::filesystem::is_directory(dataset_root))
      throw ConfigError("config: dataset_root " + dataset_root.string() + " does not exist");
    if (synthetic.n_train < 1 || synthetic.n_test < 1) throw ConfigError("config: synthetic split sizes must be >= 1");
    if (synthetic.anomaly_fraction < 0.0 || synthetic.anomaly_fraction > 1.0)
      throw ConfigError("config: anomaly_fraction must lie in [0, 1]");
    if (!(detector.coreset_ratio > 0.0) || detector.coreset_ratio > 1.0)
      throw ConfigError("config: coreset_ratio must lie in (0, 1]");
    if (detector.sigma < 0.0) throw ConfigError("config: sigma must be non-negative");
    if (pq.m == 0 || pq.K == 0 || (pq.K & (pq.K - 1)) != 0) throw ConfigError("config: pq.K must be a power of two");
    if (quality < 0 || quality > 100) throw ConfigError("config: quality must lie in [0, 100]");
    try {
      device.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& s : resolved_scenarios()) {
      s.validate();
      if (uses_codec(s.strategy)) {
        try {
          CodecRegistry::instance().by_name(s.codec);
        } catch (const CodecError&) {
          throw ConfigError("scenario " + s.name + ": unknown codec \"" + s.codec + "\"");
        }
      }
    }
  }
};

inline CategoryKind parse_category_kind(const std::string& name, const std::string& kind) {
  if (kind == "object") return CategoryKind::object;
  if (kind == "texture") return CategoryKind::texture;
  if (kind.empty()) {
    if (auto k = mvtec_category_kind(name)) return *k;
    return CategoryKind::object;
  }
  throw ConfigError("config: unknown category kind \"" + kind + "\"");
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    if (j.contains("feature_source")) {
      const auto fs = j["feature_source"].get<std::string>();
      if (fs == "synthetic") c.feature_source = FeatureSource::synthetic;
      else if (fs == "prepared" || fs == "precomputed") c.feature_source = FeatureSource::prepared;
      else throw ConfigError("config: unknown feature_source \"" + fs + "\"");
    }
    if (j.contains("dataset_root")) c.dataset_root = j["dataset_root"].get<std::string>();
    if (j.contains("categories")) {
      c.categories.clear();
      for (const auto& cj : j["categories"]) {
        CategorySpec cs;
        if (cj.is_string()) {
          cs.name = cj.get<std::string>();
          cs.kind = parse_category_kind(cs.name, "");
        } else {
          cs.name = cj.at("name").get<std::string>();
          cs.kind = parse_category_kind(cs.name, cj.value("kind", std::string()));
        }
        c.categories.push_back(cs);
      }
    }
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      c.synthetic.n_train = s.value("n_train", c.synthetic.n_train);
      c.synthetic.n_test = s.value("n_test", c.synthetic.n_test);
      c.synthetic.anomaly_fraction = s.value("anomaly_fraction", c.synthetic.anomaly_fraction);
      c.synthetic.delta_sigma = s.value("delta_sigma", c.synthetic.delta_sigma);
      c.synthetic.noise_std = s.value("noise_std", c.synthetic.noise_std);
    }
    if (j.contains("device")) {
      const auto& d = j["device"];
      c.device.bandwidth_bytes_per_s = d.value("bandwidth_bytes_per_s", c.device.bandwidth_bytes_per_s);
      c.device.cpu_scale = d.value("cpu_scale", c.device.cpu_scale);
      if (d.contains("compute_budget") && !d["compute_budget"].is_null())
        c.device.compute_budget = d["compute_budget"].get<double>();
      if (d.contains("comm_budget") && !d["comm_budget"].is_null())
        c.device.comm_budget = d["comm_budget"].get<std::uint64_t>();
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("report_formats")) c.report_formats = j["report_formats"].get<std::vector<std::string>>();
    for (const auto& f : c.report_formats)
      if (f != "tsv" && f != "json") throw ConfigError("config: unknown report format \"" + f + "\"");
    c.capture_timing = j.value("capture_timing", c.capture_timing);
    c.parallel = j.value("parallel", c.parallel);
    c.workers = j.value("workers", c.workers);
    if (j.contains("detector")) {
      const auto& d = j["detector"];
      c.detector.coreset_ratio = d.value("coreset_ratio", c.detector.coreset_ratio);
      c.detector.sigma = d.value("sigma", c.detector.sigma);
    }
    if (j.contains("pq")) {
      const auto& p = j["pq"];
      c.pq.m = p.value("m", c.pq.m);
      c.pq.K = p.value("K", c.pq.K);
      c.pq.max_iters = p.value("max_iters", c.pq.max_iters);
      c.pq.train_max_vectors = p.value("train_max_vectors", c.pq.train_max_vectors);
    }
    if (j.contains("image")) {
      const auto& im = j["image"];
      c.image_side = im.value("side", c.image_side);
      c.image_codec = im.value("codec", c.image_codec);
      c.quality = im.value("quality", c.quality);
    }
    if (j.contains("feature_codec")) c.feature_codec = j["feature_codec"].get<std::string>();
    c.baseline = j.value("baseline", c.baseline);
    if (j.contains("scenarios")) {
      for (const auto& sj : j["scenarios"]) {
        if (sj.is_string()) {
          auto s = builtin_scenario(sj.get<std::string>(), c.image_codec, c.feature_codec, c.quality);
          if (!s) throw ConfigError("config: unknown built-in scenario \"" + sj.get<std::string>() + "\"");
          c.scenarios.push_back(*s);
          continue;
        }
        const auto name = sj.at("name").get<std::string>();
        Scenario s;
        if (auto b = builtin_scenario(name, c.image_codec, c.feature_codec, c.quality)) s = *b;
        s.name = name;
        if (sj.contains("strategy")) {
          auto st = strategy_from_string(sj["strategy"].get<std::string>());
          if (!st) throw ConfigError("config: scenario " + name + " has unknown strategy");
          s.strategy = *st;
          s.edge_model_params = uses_edge_features(s.strategy) ? kEdgeBackboneParams : 0.0;
        } else if (!builtin_scenario(name)) {
          throw ConfigError("config: custom scenario " + name + " needs a strategy");
        }
        s.alpha = sj.value("alpha", s.alpha);
        s.quality = sj.value("quality", s.quality);
        s.codec = sj.value("codec", s.codec);
        s.per_channel_range = sj.value("per_channel_range", s.per_channel_range);
        s.include_codebook = sj.value("include_codebook", s.include_codebook);
        s.edge_model_params = sj.value("edge_model_params", s.edge_model_params);
        c.scenarios.push_back(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace vad
