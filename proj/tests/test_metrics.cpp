#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vad/metrics.hpp"
#include "vad/random.hpp"

using namespace vad;

namespace {

double pairwise_auc(const std::vector<std::uint8_t>& y, const std::vector<double>& s) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] && !y[j]) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

double exhaustive_f1(const std::vector<Image8>& masks, const std::vector<FloatMatrix>& maps) {
  std::vector<float> ts;
  for (const auto& m : maps) ts.insert(ts.end(), m.data.begin(), m.data.end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  double best = 0.0;
  for (float t : ts) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < masks.size(); ++i)
      for (std::size_t p = 0; p < maps[i].data.size(); ++p) {
        const bool pred = maps[i].data[p] >= t, truth = masks[i].data[p] != 0;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
      }
    if (tp > 0) best = std::max(best, 2 * tp / (2 * tp + fp + fn));
  }
  return best;
}

}  // namespace

TEST(RocAuc, PerfectSeparation) {
  const std::vector<std::uint8_t> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(y, std::vector<double>{0.1, 0.2, 0.8, 0.9}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(y, std::vector<double>{0.8, 0.9, 0.1, 0.2}), 0.0);
}

TEST(RocAuc, AllTiesIsHalf) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<std::uint8_t>{0, 1, 0, 1, 1}, std::vector<double>(5, 3.0)), 0.5);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<std::uint8_t> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint8_t>(i < 1 ? 0 : i < 2 ? 1 : rng.below(2));
      s[i] = static_cast<double>(rng.below(8));  // plenty of ties
    }
    EXPECT_NEAR(roc_auc(y, s), pairwise_auc(y, s), 1e-12);
  }
}

TEST(RocAuc, SingleClassThrows) {
  EXPECT_THROW(roc_auc(std::vector<std::uint8_t>{1, 1}, std::vector<double>{0.1, 0.2}), InvalidArgument);
  EXPECT_THROW(roc_auc(std::vector<std::uint8_t>{1, 0}, std::vector<double>{0.1}), DimensionError);
}

TEST(PixelF1, MapEqualToMaskIsOne) {
  Image8 mask(8, 8, 1);
  FloatMatrix map(8, 8);
  for (int i = 0; i < 20; ++i) {
    mask.data[i * 3] = 1;
    map.data[i * 3] = 1.0f;
  }
  EXPECT_DOUBLE_EQ(pixel_f1_best(std::vector<Image8>{mask}, std::vector<FloatMatrix>{map}).f1, 1.0);
}

// An inverted map is best thresholded at its minimum: everything predicted.
TEST(PixelF1, InvertedMapFallsBackToPredictAll) {
  Image8 mask(8, 8, 1);
  FloatMatrix map(8, 8);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    mask.data[i] = i % 5 == 0;
    pos += mask.data[i];
    map.data[i] = 1.0f - static_cast<float>(mask.data[i]);
  }
  const double expect = 2.0 * pos / (pos + 64.0);
  EXPECT_NEAR(pixel_f1_best(std::vector<Image8>{mask}, std::vector<FloatMatrix>{map}).f1, expect, 1e-12);
}

TEST(PixelF1, SubsampledThresholdsStayCloseToExhaustive) {
  Rng rng(9);
  std::vector<Image8> masks;
  std::vector<FloatMatrix> maps;
  for (int k = 0; k < 3; ++k) {
    Image8 m(64, 64, 1);
    FloatMatrix s(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const bool in = (x - 20 - 8 * k) * (x - 20 - 8 * k) + (y - 30) * (y - 30) < 120;
        m.data[y * 64 + x] = in;
        s.data[y * 64 + x] = static_cast<float>((in ? 1.0 : 0.0) + rng.normal() * 0.6);
      }
    masks.push_back(std::move(m));
    maps.push_back(std::move(s));
  }
  const double ref = exhaustive_f1(masks, maps);
  EXPECT_NEAR(pixel_f1_best(masks, maps, 1024).f1, ref, 0.005);
  EXPECT_NEAR(pixel_f1_best(masks, maps, 1u << 20).f1, ref, 1e-12);
}

TEST(PixelF1, Errors) {
  EXPECT_THROW(pixel_f1_best(std::vector<Image8>{Image8(4, 4, 1)}, std::vector<FloatMatrix>{FloatMatrix(4, 5)}),
               DimensionError);
  EXPECT_THROW(pixel_f1_best(std::vector<Image8>{Image8(4, 4, 1)}, std::vector<FloatMatrix>{FloatMatrix(4, 4)}),
               InvalidArgument);
}

TEST(DeltaPercent, Examples) {
  EXPECT_NEAR(delta_percent(0.55, 0.5), 10.0, 1e-9);
  EXPECT_NEAR(delta_percent(0.45, 0.5), -10.0, 1e-9);
  EXPECT_DOUBLE_EQ(delta_percent(0.5, 0.5), 0.0);
  EXPECT_THROW(delta_percent(1.0, 0.0), InvalidArgument);
}

TEST(MetricTable, AggregatesAndDeltas) {
  MetricReport a{"original", {{"bottle", CategoryKind::object, 0.6, 0, 1.0}, {"wood", CategoryKind::texture, 0.4, 0, 0.9}}};
  MetricReport b{"pq", {{"bottle", CategoryKind::object, 0.3, 0, 1.0}, {"wood", CategoryKind::texture, 0.2, 0, 0.9}}};
  EXPECT_DOUBLE_EQ(*a.aggregate().f1_pixel, 0.5);
  EXPECT_DOUBLE_EQ(*a.aggregate(CategoryKind::texture).roc_image, 0.9);
  const std::vector<MetricReport> reps = {a, b};
  const auto tsv = metric_table_tsv(reps, "original");
  EXPECT_NE(tsv.find("metric\tclass\toriginal\tpq\n"), std::string::npos);
  EXPECT_NE(tsv.find("F1 (pxl)\tOverall\t0.500\t0.250\n"), std::string::npos);
  EXPECT_NE(tsv.find("F1 (pxl)\tDelta Overall (%)\t0.00%\t-50.00%\n"), std::string::npos);
  EXPECT_NE(tsv.find("ROC (img)\tDelta Overall (%)\t0.00%\t0.00%\n"), std::string::npos);
}

TEST(MetricTable, MissingKindPrintsDash) {
  MetricReport a{"original", {{"x", CategoryKind::object, 0.6, 0, 1.0}}};
  const std::vector<MetricReport> reps = {a};
  EXPECT_NE(metric_table_tsv(reps, "original").find("F1 (pxl)\tTextures\t-\n"), std::string::npos);
}

TEST(CategoryKind, MvtecSplit) {
  EXPECT_EQ(mvtec_category_kind("bottle"), CategoryKind::object);
  EXPECT_EQ(mvtec_category_kind("wood"), CategoryKind::texture);
  EXPECT_FALSE(mvtec_category_kind("synthetic_a"));
}
