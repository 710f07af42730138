#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "vad/codecs.hpp"
#include "vad/random.hpp"

using namespace vad;

namespace {

PatchGrid random_grid(std::uint32_t rows, std::uint32_t cols, std::uint32_t d, std::uint64_t seed) {
  Rng rng(seed);
  PatchGrid g(rows, cols, d);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      for (auto& v : g.append({r, c})) v = static_cast<float>(rng.normal());
  return g;
}

FeatureStack random_stack(std::uint64_t seed) {
  Rng rng(seed);
  FeatureStack s;
  const int dims[][3] = {{6, 8, 8}, {4, 4, 4}, {3, 2, 2}};
  int layer = 1;
  for (const auto& d : dims) {
    std::vector<float> v(static_cast<std::size_t>(d[0]) * d[1] * d[2]);
    for (auto& x : v) x = static_cast<float>(rng.normal() * 3.0);
    s.layers.emplace_back(layer++, d[0], d[1], d[2], std::move(v));
  }
  return s;
}

Image8 smooth_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  const double fy = rng.uniform(0.5, 2.0), fx = rng.uniform(0.5, 2.0), ph = rng.uniform(0.0, 6.28);
  Image8 img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = 128 + 60 * std::sin(6.28318 * (fy * y / h + fx * x / w) + ph + c) +
                         30 * std::cos(6.28318 * (x + c * 7) / (2.0 * w));
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
  return img;
}

const ImageCodec& codec(const char* name) { return *CodecRegistry::instance().by_name(name); }

}  // namespace

// ---------------------------------------------------------------------------
// Random sampling

TEST(RandomSampling, AlphaOneKeepsEverythingInOrder) {
  const auto g = random_grid(4, 4, 3, 1);
  for (std::uint64_t seed : {0ull, 5ull, 99ull}) EXPECT_EQ(rs_encode(g, 1.0, seed), g);
}

TEST(RandomSampling, QuarterOfSixteen) {
  const auto g = random_grid(4, 4, 2, 2);
  const auto s = rs_encode(g, 0.25, 3);
  ASSERT_EQ(s.size(), 4u);
  std::set<GridCoord> seen(s.coords().begin(), s.coords().end());
  EXPECT_EQ(seen.size(), 4u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = s.coord(i);
    const auto src = g.vector(c.row * 4 + c.col);
    EXPECT_TRUE(std::equal(src.begin(), src.end(), s.vector(i).begin()));
  }
  EXPECT_TRUE(std::is_sorted(s.coords().begin(), s.coords().end()));
}

TEST(RandomSampling, SameSeedSameSelection) {
  const auto g = random_grid(10, 10, 2, 3);
  EXPECT_EQ(rs_encode(g, 0.5, 11), rs_encode(g, 0.5, 11));
  EXPECT_NE(rs_encode(g, 0.5, 11), rs_encode(g, 0.5, 12));
}

// Per-cell inclusion over 1000 seeds: each count is Binomial(1000, 1/2).
// Chi-square with 99 degrees of freedom, critical value at p = 0.01.
TEST(RandomSampling, InclusionIsUniform) {
  const auto g = random_grid(10, 10, 1, 4);
  std::vector<int> hits(100, 0);
  std::set<std::vector<GridCoord>> distinct;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto s = rs_encode(g, 0.5, seed);
    ASSERT_EQ(s.size(), 50u);
    for (auto c : s.coords()) ++hits[c.row * 10 + c.col];
    distinct.insert(std::vector<GridCoord>(s.coords().begin(), s.coords().end()));
  }
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - 500.0) * (h - 500.0) / 250.0;
  EXPECT_LT(chi2, 134.642);
  EXPECT_GT(distinct.size(), 990u);
}

TEST(RandomSampling, Errors) {
  const auto g = random_grid(2, 2, 1, 5);
  EXPECT_THROW(rs_encode(g, 0.0, 1), InvalidArgument);
  EXPECT_THROW(rs_encode(g, 1.01, 1), InvalidArgument);
  EXPECT_THROW(rs_encode(rs_encode(g, 0.5, 1), 0.5, 1), InvalidArgument);
}

TEST(RandomSampling, PayloadByteCount) {
  const auto g = random_grid(4, 4, 5, 6);
  const auto s = rs_encode(g, 0.25, 7);
  const auto p = rs_payload(s);
  const std::size_t header = 2 + 2 + 4 + 4;  // rows, cols, d, count
  EXPECT_EQ(p.size_bytes(), header + 4 * (2 * 2 + 5 * 4));
  EXPECT_EQ(measure_payload(p), p.size_bytes());
  EXPECT_EQ(parse_sampled_payload(p), s);
  EXPECT_THROW(rs_payload(SampledPatchSet(4, 4, 5)), InvalidArgument);
}

TEST(RandomSampling, FullSetCostsRawPlusCoordinates) {
  FeatureStack st;
  st.layers.push_back(random_stack(8).layers[0]);
  const auto g = build_patch_grid(st);
  const auto raw = encode_raw_features(st);
  const auto full = rs_payload(rs_encode(g, 1.0, 1));
  EXPECT_EQ(full.body.size() - 4 * g.size(), raw.body.size());
  EXPECT_GE(full.size_bytes(), raw.size_bytes());
}

// ---------------------------------------------------------------------------
// Payload container

TEST(Payload, RoundTripAndEmptySize) {
  EXPECT_EQ(measure_payload(Payload{}), 0u);
  Payload p{PayloadKind::pq_codes, {1, 2, 3}, {4, 5}};
  const auto wire = serialize_payload(p);
  EXPECT_EQ(wire.size(), p.wire_bytes());
  EXPECT_EQ(p.size_bytes(), 5u);
  EXPECT_EQ(parse_payload(wire), p);
}

TEST(Payload, CorruptionClassesAreDistinct) {
  const Payload p{PayloadKind::raw_image, {1, 2, 3}, {4, 5, 6, 7}};
  const auto wire = serialize_payload(p);
  auto kind_of = [](const Bytes& b) {
    try {
      parse_payload(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error";
    return FormatError::Kind::invalid_value;
  };
  auto bad = wire;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), FormatError::Kind::bad_magic);
  bad = wire;
  bad[4] = 9;
  EXPECT_EQ(kind_of(bad), FormatError::Kind::unsupported_version);
  bad = wire;
  bad.pop_back();
  EXPECT_EQ(kind_of(bad), FormatError::Kind::truncated);
  bad = wire;
  bad.push_back(0);
  EXPECT_EQ(kind_of(bad), FormatError::Kind::size_mismatch);
  bad = wire;
  bad[5] = 77;
  EXPECT_EQ(kind_of(bad), FormatError::Kind::invalid_value);
}

TEST(RawImage, PayloadCountsEveryPixel) {
  const auto img = smooth_image(224, 224, 1);
  const auto p = encode_raw_image(img);
  EXPECT_EQ(measure_payload(p), 5u + 224 * 224 * 3);
  EXPECT_EQ(decode_raw_image(p), img);
  auto bad = p;
  bad.body.pop_back();
  EXPECT_THROW(decode_raw_image(bad), FormatError);
}

TEST(RawFeatures, RoundTripBitExact) {
  const auto s = random_stack(9);
  const auto p = encode_raw_features(s);
  EXPECT_EQ(p.body.size(), s.total_values() * 4);
  const auto layers = decode_raw_features(parse_payload(serialize_payload(p)));
  EXPECT_EQ(layers, s.layers);
}

// ---------------------------------------------------------------------------
// Tiling

TEST(Tiling, ConstantTensor) {
  FeatureTensor t(1, 3, 2, 2, std::vector<float>(12, 3.7f));
  const auto tp = tile_pack(t);
  EXPECT_FALSE(tp.plane.any_nonzero());
  EXPECT_EQ(tp.plan.value_min, 3.7f);
  EXPECT_EQ(tp.plan.value_max, 3.7f);
  EXPECT_EQ(tile_unpack(tp.plane, tp.plan), t);
}

TEST(Tiling, QuantizationFormula) {
  FeatureTensor t(1, 1, 2, 2, {0, 1, 2, 3});
  const auto tp = tile_pack(t);
  ASSERT_EQ(tp.plane.height, 2);
  ASSERT_EQ(tp.plane.width, 2);
  EXPECT_EQ(tp.plane.at(0, 0), 0);
  EXPECT_EQ(tp.plane.at(0, 1), 85);
  EXPECT_EQ(tp.plane.at(1, 0), 170);
  EXPECT_EQ(tp.plane.at(1, 1), 255);
}

TEST(Tiling, FiveChannelLayout) {
  std::vector<float> v(5 * 2 * 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0f + static_cast<float>(i);
  const auto tp = tile_pack(FeatureTensor(1, 5, 2, 2, v));
  EXPECT_EQ(tp.plan.tiles_per_row, 3);
  EXPECT_EQ(tp.plan.tiles_per_col, 2);
  EXPECT_EQ(tp.plane.width, 6);
  EXPECT_EQ(tp.plane.height, 4);
  for (int y = 2; y < 4; ++y)
    for (int x = 4; x < 6; ++x) EXPECT_EQ(tp.plane.at(y, x), 0);
  // Channel 4 sits at tile (row 1, col 1).
  EXPECT_EQ(tp.plane.at(2, 2), detail::quantize8(v[16], 1.0f, 20.0f));
}

TEST(Tiling, RoundTripErrorBound) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const int C = 1 + static_cast<int>(rng.below(20)), H = 1 + static_cast<int>(rng.below(9)),
              W = 1 + static_cast<int>(rng.below(9));
    std::vector<float> v(static_cast<std::size_t>(C) * H * W);
    for (auto& x : v) x = static_cast<float>(rng.normal() * 5.0);
    const FeatureTensor t(2, C, H, W, v);
    for (bool per_channel : {false, true}) {
      const auto tp = tile_pack(t, per_channel);
      const auto back = tile_unpack(tp.plane, tp.plan, 2);
      for (int c = 0; c < C; ++c) {
        const auto [lo, hi] = tp.plan.range(c);
        const double bound = (hi - lo) / 510.0 + 1e-5 * (std::abs(hi) + std::abs(lo) + 1.0);
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) EXPECT_LE(std::abs(back.at(c, y, x) - t.at(c, y, x)), bound);
      }
    }
  }
}

TEST(Tiling, PlanMismatchIsDimensionError) {
  const auto tp = tile_pack(FeatureTensor(1, 4, 3, 3, std::vector<float>(36, 1.0f)));
  EXPECT_THROW(tile_unpack(Image8(5, 6, 1), tp.plan), DimensionError);
  EXPECT_THROW(tile_unpack(Image8(6, 6, 3), tp.plan), DimensionError);
}

TEST(Tiling, StackPayloadRoundTripLossless) {
  const auto s = random_stack(11);
  const auto p = encode_tiled_stack(s, codec("deflate"), 80);
  EXPECT_EQ(p.meta.size(), 3 * TilePlan::kRecordBytes);
  const auto layers = decode_tiled_stack(parse_payload(serialize_payload(p)));
  ASSERT_EQ(layers.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto vals = s.layers[l].values();
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    const double bound = (*hi - *lo) / 510.0 + 1e-5;
    EXPECT_EQ(layers[l].layer(), s.layers[l].layer());
    for (std::size_t i = 0; i < vals.size(); ++i) EXPECT_LE(std::abs(layers[l].values()[i] - vals[i]), bound);
  }
}

TEST(Tiling, SampledPayloadKeepsCoordinates) {
  const auto s = random_stack(12);
  FeatureStack two;
  two.layers = {s.layers[0], s.layers[1]};
  const auto g = build_patch_grid(two);
  const auto set = rs_encode(g, 0.5, 3);
  const int channels[] = {6, 4};
  for (bool per_channel : {false, true}) {
    const auto back = decode_tiled_sampled(encode_tiled_sampled(set, channels, codec("deflate"), 80, per_channel));
    ASSERT_EQ(back.size(), set.size());
    EXPECT_TRUE(std::equal(back.coords().begin(), back.coords().end(), set.coords().begin()));
    for (std::size_t i = 0; i < set.size(); ++i)
      for (std::size_t k = 0; k < set.dim(); ++k) EXPECT_NEAR(back.vector(i)[k], set.vector(i)[k], 0.2);
  }
  const int wrong[] = {6, 3};
  EXPECT_THROW(encode_tiled_sampled(set, wrong, codec("deflate"), 80), DimensionError);
}

// ---------------------------------------------------------------------------
// Image codecs

TEST(ImageCodec, JpegQuality80OnSmoothImages) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto img = smooth_image(224, 224, seed);
    const auto p = image_encode(img, 80, codec("jpeg"));
    EXPECT_LE(p.size_bytes(), encode_raw_image(img).size_bytes() / 10);
    const auto back = image_decode(parse_payload(serialize_payload(p)));
    ASSERT_EQ(back.height, 224);
    ASSERT_EQ(back.width, 224);
    ASSERT_EQ(back.channels, 3);
    double mae = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) mae += std::abs(int(img.data[i]) - int(back.data[i]));
    EXPECT_LE(mae / static_cast<double>(img.data.size()), 8.0);
  }
}

TEST(ImageCodec, ZeroPlaneIsSmallest) {
  const auto busy = smooth_image(64, 64, 3);
  Image8 plane(64, 64, 1), zeros(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) plane.at(y, x) = busy.at(y, x, 0);
  for (const char* name : {"jpeg", "deflate"})
    EXPECT_LT(image_encode(zeros, 80, codec(name)).size_bytes(), image_encode(plane, 80, codec(name)).size_bytes())
        << name;
}

TEST(ImageCodec, LosslessRoundTripIsBitExact) {
  Rng rng(4);
  Image8 img(37, 53, 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  EXPECT_EQ(image_decode(image_encode(img, 80, codec("deflate"))), img);
  EXPECT_EQ(image_decode(image_encode(img, 0, codec("deflate"))), img);
}

TEST(ImageCodec, TruncatedStreamIsDecodeError) {
  const auto img = smooth_image(64, 64, 5);
  for (const char* name : {"jpeg", "deflate"}) {
    auto p = image_encode(img, 80, codec(name));
    p.body.resize(p.body.size() / 2);
    EXPECT_THROW(image_decode(p), CodecError) << name;
    p.body.clear();
    EXPECT_THROW(image_decode(p), CodecError) << name;
  }
}

TEST(ImageCodec, RegistryLookups) {
  EXPECT_TRUE(codec("deflate").lossless());
  EXPECT_FALSE(codec("jpeg").lossless());
  EXPECT_THROW(CodecRegistry::instance().by_name("webp2"), CodecError);
  EXPECT_THROW(CodecRegistry::instance().by_id(200), CodecError);
  EXPECT_THROW(image_encode(Image8(4, 4, 3), 101, codec("jpeg")), InvalidArgument);
}
