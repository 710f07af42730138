#pragma once

// Suite report files and replay of externally supplied latency components.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vad/channel.hpp"
#include "vad/data_io.hpp"
#include "vad/errors.hpp"
#include "vad/metrics.hpp"
#include "vad/pipeline/config.hpp"
#include "vad/pipeline/runner.hpp"

namespace vad {

// Latency overrides / replay input:
// {"baseline": "original", "edge_times_prescaled": true,
//  "delta_from_rounded_totals": true, "bandwidth_bytes_per_s": 100000,
//  "cpu_scale": 3, "rows": [{"name": ..., "payload_kB": ..., "edge_feature_ms": ...}]}
inline LatencyOverrides latency_overrides_from_json(const nlohmann::json& j) {
  LatencyOverrides o;
  try {
    if (!j.is_object()) throw ConfigError("latency overrides: top level must be an object");
    o.baseline = j.value("baseline", o.baseline);
    o.edge_times_prescaled = j.value("edge_times_prescaled", o.edge_times_prescaled);
    o.delta_from_rounded_totals = j.value("delta_from_rounded_totals", o.delta_from_rounded_totals);
    if (j.contains("bandwidth_bytes_per_s")) o.bandwidth_bytes_per_s = j["bandwidth_bytes_per_s"].get<double>();
    if (j.contains("cpu_scale")) o.cpu_scale = j["cpu_scale"].get<double>();
    if (!j.contains("rows") || !j["rows"].is_array()) throw ConfigError("latency overrides: \"rows\" array missing");
    for (const auto& rj : j["rows"]) {
      LatencyOverrideRow r;
      r.name = rj.at("name").get<std::string>();
      if (rj.contains("payload_bytes")) r.payload_bytes = rj["payload_bytes"].get<double>();
      else if (rj.contains("payload_kB")) r.payload_bytes = rj["payload_kB"].get<double>() * 1000.0;
      auto opt = [&](const char* key, std::optional<double>& dst) {
        if (rj.contains(key)) dst = rj[key].get<double>();
      };
      opt("edge_feature_ms", r.edge_feature_ms);
      opt("edge_encode_ms", r.edge_encode_ms);
      opt("server_decode_ms", r.server_decode_ms);
      opt("server_feature_ms", r.server_feature_ms);
      opt("server_ad_ms", r.server_ad_ms);
      o.rows.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("latency overrides: ") + e.what());
  }
  return o;
}

inline LatencyOverrides load_latency_overrides(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return latency_overrides_from_json(j);
}

// Recomputes transmission, totals and deltas from component timings alone.
inline LatencyReport replay_latency(const LatencyOverrides& o, DeviceProfile profile = {}) {
  if (o.bandwidth_bytes_per_s) profile.bandwidth_bytes_per_s = *o.bandwidth_bytes_per_s;
  if (o.cpu_scale) profile.cpu_scale = *o.cpu_scale;
  try {
    profile.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("latency overrides: ") + e.what());
  }
  std::vector<LatencyRow> rows;
  for (const auto& r : o.rows) {
    if (!r.complete()) throw ConfigError("latency overrides: row " + r.name + " lacks a payload or a component");
    LatencyRow row;
    row.name = r.name;
    row.payload_bytes = *r.payload_bytes;
    row.edge_feature_ms = *r.edge_feature_ms;
    row.edge_encode_ms = *r.edge_encode_ms;
    row.server_decode_ms = *r.server_decode_ms;
    row.server_feature_ms = *r.server_feature_ms;
    row.server_ad_ms = *r.server_ad_ms;
    rows.push_back(row);
  }
  LatencyOptions lo;
  lo.baseline = o.baseline;
  lo.scale_edge = !o.edge_times_prescaled;
  lo.delta_from_rounded_totals = o.delta_from_rounded_totals;
  auto rep = build_latency_report(std::move(rows), profile, lo);
  rep.edge_scaled = true;
  return rep;
}

inline std::string tradeoff_tsv(const SuiteResult& s) {
  using detail::fmt_fixed;
  using detail::fmt_opt;
  std::ostringstream os;
  os << "scenario\tstatus\tf1_pixel_overall\troc_image_overall\tmean_payload_bytes\tconstraints\n";
  for (const auto& r : s.scenarios) {
    const auto agg = r.metrics.aggregate();
    std::string cons = r.constraints.ok ? "ok" : "";
    for (const auto& v : r.constraints.violations) cons += (cons.empty() ? "" : "; ") + describe(v);
    os << r.scenario.name << '\t' << (r.ok ? "ok" : "failed") << '\t' << fmt_opt(agg.f1_pixel, 6) << '\t'
       << fmt_opt(agg.roc_image, 6) << '\t' << fmt_fixed(r.mean_payload_bytes, 1) << '\t' << cons << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json latency_row_json(const LatencyRow& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["edge_feature_ms"] = r.edge_feature_ms;
  j["edge_encode_ms"] = r.edge_encode_ms;
  j["server_decode_ms"] = r.server_decode_ms;
  j["server_feature_ms"] = r.server_feature_ms;
  j["server_ad_ms"] = r.server_ad_ms;
  j["payload_bytes"] = r.payload_bytes;
  j["tx_s"] = r.tx_s;
  j["total_s"] = r.total_s;
  j["delta_time_percent"] = r.delta_vs_baseline_percent ? nlohmann::ordered_json(*r.delta_vs_baseline_percent)
                                                        : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json latency_report_json(const LatencyReport& rep) {
  nlohmann::ordered_json j;
  j["baseline"] = rep.baseline;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rep.rows) j["rows"].push_back(latency_row_json(r));
  return j;
}

inline nlohmann::ordered_json suite_json(const SuiteResult& s, const RunConfig& cfg) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["seed"] = cfg.seed;
  j["baseline"] = cfg.baseline;
  j["capture_timing"] = cfg.capture_timing && !cfg.parallel;
  j["scenarios"] = ordered_json::array();
  for (const auto& r : s.scenarios) {
    ordered_json sj;
    sj["name"] = r.scenario.name;
    sj["strategy"] = to_string(r.scenario.strategy);
    sj["ok"] = r.ok;
    if (!r.ok) sj["error"] = r.error;
    const auto agg = r.metrics.aggregate();
    sj["f1_pixel_overall"] = agg.f1_pixel ? ordered_json(*agg.f1_pixel) : ordered_json(nullptr);
    sj["roc_image_overall"] = agg.roc_image ? ordered_json(*agg.roc_image) : ordered_json(nullptr);
    sj["mean_payload_bytes"] = r.mean_payload_bytes;
    sj["constraints_ok"] = r.constraints.ok;
    sj["constraint_violations"] = ordered_json::array();
    for (const auto& v : r.constraints.violations) sj["constraint_violations"].push_back(describe(v));
    sj["categories"] = ordered_json::array();
    for (std::size_t i = 0; i < r.metrics.rows.size(); ++i) {
      const auto& m = r.metrics.rows[i];
      ordered_json cj;
      cj["name"] = m.category;
      cj["kind"] = to_string(m.kind);
      cj["f1_pixel"] = m.f1_pixel;
      cj["f1_threshold"] = m.f1_threshold;
      cj["roc_image"] = m.roc_image;
      if (i < r.categories.size()) {
        cj["mean_payload_bytes"] = r.categories[i].mean_payload_bytes;
        cj["images"] = ordered_json::array();
        for (const auto& im : r.categories[i].images)
          cj["images"].push_back({{"id", im.id},
                                  {"label", im.label == Label::anomalous ? 1 : 0},
                                  {"score", im.score},
                                  {"raw_score", im.raw_score},
                                  {"payload_bytes", im.payload_bytes}});
      }
      sj["categories"].push_back(cj);
    }
    j["scenarios"].push_back(sj);
  }
  j["latency"] = latency_report_json(s.latency);
  return j;
}

// Writes the report files for the configured formats; returns their paths.
inline std::vector<fs::path> write_suite_reports(const SuiteResult& s, const RunConfig& cfg, const fs::path& dir) {
  std::vector<fs::path> written;
  auto put = [&](const char* name, const std::string& text) {
    write_text_file(dir / name, text);
    written.push_back(dir / name);
  };
  auto has = [&](const char* f) {
    return std::find(cfg.report_formats.begin(), cfg.report_formats.end(), f) != cfg.report_formats.end();
  };
  std::vector<MetricReport> metrics;
  for (const auto& r : s.scenarios) metrics.push_back(r.metrics);
  if (has("tsv")) {
    put("metrics.tsv", metric_table_tsv(metrics, cfg.baseline));
    put("categories.tsv", category_table_tsv(metrics));
    put("latency_components.tsv", latency_components_tsv(s.latency));
    put("latency_totals.tsv", latency_totals_tsv(s.latency));
    put("tradeoff.tsv", tradeoff_tsv(s));
  }
  if (has("json")) put("report.json", suite_json(s, cfg).dump(2) + "\n");
  return written;
}

}  // namespace vad
