#pragma once

// Image-level ROC AUC, pooled pixel-level F1 at the best threshold and
// relative deltas against a baseline, plus the per-category report table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vad/core_model.hpp"
#include "vad/errors.hpp"

namespace vad {

// Mann-Whitney statistic: the fraction of (positive, negative) pairs where the
// positive scores higher, ties counting one half. O(n log n) via mid-ranks.
inline double roc_auc(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw DimensionError("roc_auc: labels and scores differ in length");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the mid-rank keeps everything in integers.
  std::uint64_t pos = 0, rank2_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank2 = i + 1 + j;  // (i+1 + j) = 2 * mean of 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        ++pos;
        rank2_sum += rank2;
      }
    i = j;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("roc_auc: both classes must be present");
  const std::uint64_t u2 = rank2_sum - pos * (pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct F1Result {
  double f1 = 0.0;
  double threshold = 0.0;
};

// Candidate thresholds: the distinct values, subsampled to at most
// `max_thresholds` evenly spaced quantiles (both extremes kept).
inline std::vector<float> threshold_candidates(std::vector<float> values, std::size_t max_thresholds) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  if (values.size() <= max_thresholds || max_thresholds < 2) return values;
  std::vector<float> out(max_thresholds);
  const double step = static_cast<double>(values.size() - 1) / static_cast<double>(max_thresholds - 1);
  for (std::size_t i = 0; i < max_thresholds; ++i)
    out[i] = values[static_cast<std::size_t>(std::llround(static_cast<double>(i) * step))];
  return out;
}

// Pools all pixels of all maps; a pixel is predicted anomalous when its map
// value is >= the threshold. Returns the best F1 over the candidate set.
inline F1Result pixel_f1_best(std::span<const Image8> masks, std::span<const FloatMatrix> maps,
                              std::size_t max_thresholds = 1024) {
  if (masks.size() != maps.size()) throw DimensionError("pixel_f1_best: mask and map counts differ");
  std::vector<float> all, positives;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& mk = masks[i];
    const auto& mp = maps[i];
    if (mk.channels != 1 || static_cast<std::size_t>(mk.height) != mp.rows ||
        static_cast<std::size_t>(mk.width) != mp.cols)
      throw DimensionError("pixel_f1_best: mask " + std::to_string(i) + " shape differs from its map");
    for (std::size_t p = 0; p < mp.data.size(); ++p) {
      all.push_back(mp.data[p]);
      if (mk.data[p]) positives.push_back(mp.data[p]);
    }
  }
  if (positives.empty()) throw InvalidArgument("pixel_f1_best: no positive pixels");

  auto candidates = threshold_candidates(all, max_thresholds);
  std::sort(all.begin(), all.end());
  std::sort(positives.begin(), positives.end());
  const double total_pos = static_cast<double>(positives.size());
  F1Result best{0.0, candidates.front()};
  for (float t : candidates) {
    const auto pp = static_cast<double>(all.end() - std::lower_bound(all.begin(), all.end(), t));
    const auto tp = static_cast<double>(positives.end() - std::lower_bound(positives.begin(), positives.end(), t));
    const double f1 = tp > 0 ? 2.0 * tp / (pp + total_pos) : 0.0;
    if (f1 > best.f1) best = {f1, t};
  }
  return best;
}

// 100 * (value - baseline) / baseline.
inline double delta_percent(double value, double baseline) {
  if (baseline == 0.0) throw InvalidArgument("delta_percent: zero baseline");
  return 100.0 * (value - baseline) / baseline;
}

enum class CategoryKind { object, texture };

inline const char* to_string(CategoryKind k) { return k == CategoryKind::object ? "object" : "texture"; }

// Object/texture split of the MVTec AD categories; nullopt for other names.
inline std::optional<CategoryKind> mvtec_category_kind(const std::string& name) {
  static const char* objects[] = {"bottle", "cable", "capsule", "hazelnut", "transistor",
                                  "metal_nut", "pill", "screw", "toothbrush", "zipper"};
  static const char* textures[] = {"carpet", "grid", "leather", "tile", "wood"};
  for (auto* o : objects)
    if (name == o) return CategoryKind::object;
  for (auto* t : textures)
    if (name == t) return CategoryKind::texture;
  return std::nullopt;
}

struct CategoryMetrics {
  std::string category;
  CategoryKind kind = CategoryKind::object;
  double f1_pixel = 0.0;
  double f1_threshold = 0.0;
  double roc_image = 0.0;
};

struct MetricAggregate {
  std::optional<double> f1_pixel;
  std::optional<double> roc_image;
};

struct MetricReport {
  std::string scenario;
  std::vector<CategoryMetrics> rows;

  // Unweighted mean over the categories of one kind (or all when kind is empty).
  MetricAggregate aggregate(std::optional<CategoryKind> kind = std::nullopt) const {
    double f1 = 0.0, roc = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (!kind || r.kind == *kind) {
        f1 += r.f1_pixel;
        roc += r.roc_image;
        ++n;
      }
    if (n == 0) return {};
    return {f1 / static_cast<double>(n), roc / static_cast<double>(n)};
  }
};

namespace detail {

inline std::string fmt_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, int decimals) {
  return v ? fmt_fixed(*v, decimals) : std::string("-");
}

inline std::string fmt_delta(const std::optional<double>& v, const std::optional<double>& base) {
  if (!v || !base || *base == 0.0) return "-";
  return fmt_fixed(delta_percent(*v, *base), 2) + "%";
}

}  // namespace detail

// Tab-separated table with one column per scenario and rows
// F1 (pxl) / ROC (img) x {Objects, Textures, Overall, Delta Overall (%)}.
inline std::string metric_table_tsv(std::span<const MetricReport> reports, const std::string& baseline) {
  const MetricReport* base = nullptr;
  for (const auto& r : reports)
    if (r.scenario == baseline) base = &r;
  std::ostringstream os;
  os << "metric\tclass";
  for (const auto& r : reports) os << '\t' << r.scenario;
  os << '\n';
  struct Pick {
    const char* label;
    std::optional<double> MetricAggregate::*field;
  };
  const Pick picks[] = {{"F1 (pxl)", &MetricAggregate::f1_pixel}, {"ROC (img)", &MetricAggregate::roc_image}};
  for (const auto& pk : picks) {
    const std::pair<const char*, std::optional<CategoryKind>> classes[] = {
        {"Objects", CategoryKind::object}, {"Textures", CategoryKind::texture}, {"Overall", std::nullopt}};
    for (const auto& [name, kind] : classes) {
      os << pk.label << '\t' << name;
      for (const auto& r : reports) os << '\t' << detail::fmt_opt(r.aggregate(kind).*pk.field, 3);
      os << '\n';
    }
    os << pk.label << "\tDelta Overall (%)";
    for (const auto& r : reports)
      os << '\t'
         << detail::fmt_delta(r.aggregate().*pk.field,
                              base ? base->aggregate().*pk.field : std::optional<double>{});
    os << '\n';
  }
  return os.str();
}

// One row per (scenario, category).
inline std::string category_table_tsv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "scenario\tcategory\tkind\tf1_pixel\tf1_threshold\troc_image\n";
  for (const auto& r : reports)
    for (const auto& c : r.rows)
      os << r.scenario << '\t' << c.category << '\t' << to_string(c.kind) << '\t' << detail::fmt_fixed(c.f1_pixel, 6)
         << '\t' << detail::fmt_fixed(c.f1_threshold, 6) << '\t' << detail::fmt_fixed(c.roc_image, 6) << '\n';
  return os.str();
}

}  // namespace vad
