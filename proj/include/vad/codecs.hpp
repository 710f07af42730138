#pragma once

// Edge-side encoders and server-side decoders for every transmission
// strategy except product quantization (see pq.hpp).
//
// Payload wire format (little-endian):
//   "VPLD" | version u8 | kind u8 | meta_len u32 | meta | body_len u32 | body
// size_bytes() counts meta + body; wire_bytes() adds the 14-byte envelope.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vad/byte_io.hpp"
#include "vad/core_model.hpp"
#include "vad/errors.hpp"
#include "vad/image_codec.hpp"
#include "vad/random.hpp"

namespace vad {

enum class PayloadKind : std::uint8_t {
  raw_image = 0,
  compressed_image = 1,
  raw_features = 2,
  sampled_features = 3,
  pq_codes = 4,
  tiled_features = 5,
};

inline const char* to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::raw_image: return "raw_image";
    case PayloadKind::compressed_image: return "compressed_image";
    case PayloadKind::raw_features: return "raw_features";
    case PayloadKind::sampled_features: return "sampled_features";
    case PayloadKind::pq_codes: return "pq_codes";
    case PayloadKind::tiled_features: return "tiled_features";
  }
  return "unknown";
}

struct Payload {
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kFramingBytes = 4 + 1 + 1 + 4 + 4;

  PayloadKind kind = PayloadKind::raw_image;
  Bytes meta;
  Bytes body;

  // Transmitted size: header fields plus data. The fixed wire envelope
  // (magic, version, kind, lengths) is not counted.
  std::size_t size_bytes() const noexcept { return meta.size() + body.size(); }
  std::size_t wire_bytes() const noexcept { return kFramingBytes + size_bytes(); }

  friend bool operator==(const Payload&, const Payload&) = default;
};

inline Bytes serialize_payload(const Payload& p) {
  ByteWriter w(p.wire_bytes());
  w.magic("VPLD");
  w.u8(Payload::kVersion);
  w.u8(static_cast<std::uint8_t>(p.kind));
  w.u32(static_cast<std::uint32_t>(p.meta.size()));
  w.raw(p.meta);
  w.u32(static_cast<std::uint32_t>(p.body.size()));
  w.raw(p.body);
  return std::move(w).take();
}

inline Payload parse_payload(std::span<const std::uint8_t> data) {
  ByteReader r(data, "payload");
  r.expect_magic("VPLD");
  const auto version = r.u8();
  if (version != Payload::kVersion)
    throw FormatError(FormatError::Kind::unsupported_version,
                      "payload: unsupported version " + std::to_string(version));
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(PayloadKind::tiled_features))
    throw FormatError(FormatError::Kind::invalid_value, "payload: unknown kind " + std::to_string(kind));
  Payload p;
  p.kind = static_cast<PayloadKind>(kind);
  auto meta = r.raw(r.u32());
  p.meta.assign(meta.begin(), meta.end());
  auto body = r.raw(r.u32());
  p.body.assign(body.begin(), body.end());
  if (!r.at_end())
    throw FormatError(FormatError::Kind::size_mismatch,
                      "payload: " + std::to_string(r.remaining()) + " trailing bytes after body");
  return p;
}

// Bytes that cross the channel for this payload.
inline std::uint64_t measure_payload(const Payload& p) { return p.size_bytes(); }

namespace detail {

inline void expect_kind(const Payload& p, PayloadKind k, const char* who) {
  if (p.kind != k)
    throw InvalidArgument(std::string(who) + ": expected payload kind " + to_string(k) + ", got " + to_string(p.kind));
}

inline void expect_consumed(const ByteReader& r) {
  if (!r.at_end())
    throw FormatError(FormatError::Kind::size_mismatch,
                      r.context() + ": " + std::to_string(r.remaining()) + " unexpected trailing bytes");
}

inline std::uint16_t checked_u16(std::size_t v, const char* what) {
  if (v > 0xFFFF) throw InvalidArgument(std::string(what) + " exceeds 65535");
  return static_cast<std::uint16_t>(v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Images

// Uncompressed pixels. meta: H u16, W u16, C u8.
inline Payload encode_raw_image(const Image8& image) {
  Payload p;
  p.kind = PayloadKind::raw_image;
  ByteWriter m;
  m.u16(detail::checked_u16(image.height, "image height"));
  m.u16(detail::checked_u16(image.width, "image width"));
  m.u8(static_cast<std::uint8_t>(image.channels));
  p.meta = std::move(m).take();
  p.body = image.data;
  return p;
}

inline Image8 decode_raw_image(const Payload& p) {
  detail::expect_kind(p, PayloadKind::raw_image, "decode_raw_image");
  ByteReader m(p.meta, "raw_image meta");
  const int h = m.u16(), w = m.u16(), c = m.u8();
  detail::expect_consumed(m);
  if (h == 0 || w == 0 || c == 0) throw FormatError(FormatError::Kind::invalid_value, "raw_image: zero dimension");
  if (p.body.size() != static_cast<std::size_t>(h) * w * c)
    throw FormatError(FormatError::Kind::size_mismatch, "raw_image: body length disagrees with H*W*C");
  Image8 img(h, w, c);
  img.data = p.body;
  return img;
}

// Still-image codec. meta: H u16, W u16, C u8, codec id u8, quality u8.
inline Payload image_encode(const Image8& image, int quality, const ImageCodec& codec) {
  if (quality < 0 || quality > 100) throw InvalidArgument("image_encode: quality must be in [0, 100]");
  if (image.empty()) throw InvalidArgument("image_encode: empty image");
  Payload p;
  p.kind = PayloadKind::compressed_image;
  ByteWriter m;
  m.u16(detail::checked_u16(image.height, "image height"));
  m.u16(detail::checked_u16(image.width, "image width"));
  m.u8(static_cast<std::uint8_t>(image.channels));
  m.u8(codec.id());
  m.u8(static_cast<std::uint8_t>(quality));
  p.meta = std::move(m).take();
  p.body = codec.encode(image, quality);
  return p;
}

inline Image8 image_decode(const Payload& p, const CodecRegistry& codecs = CodecRegistry::instance()) {
  detail::expect_kind(p, PayloadKind::compressed_image, "image_decode");
  ByteReader m(p.meta, "compressed_image meta");
  const int h = m.u16(), w = m.u16(), c = m.u8();
  const auto codec_id = m.u8();
  m.u8();  // quality, informational
  detail::expect_consumed(m);
  Image8 img = codecs.by_id(codec_id)->decode(p.body);
  if (img.height != h || img.width != w || img.channels != c)
    throw CodecError("image_decode: decoded dimensions differ from payload header");
  return img;
}

// ---------------------------------------------------------------------------
// Raw features

// meta: layer count u8, per layer {index u8, C u16, H u16, W u16}; body: f32 data.
inline Payload encode_raw_features(const FeatureStack& stack) {
  stack.validate();
  if (stack.layers.size() > 255) throw InvalidArgument("encode_raw_features: too many layers");
  Payload p;
  p.kind = PayloadKind::raw_features;
  ByteWriter m;
  m.u8(static_cast<std::uint8_t>(stack.layers.size()));
  ByteWriter b(stack.total_values() * 4);
  for (const auto& l : stack.layers) {
    if (l.layer() > 255) throw InvalidArgument("encode_raw_features: layer index exceeds 255");
    m.u8(static_cast<std::uint8_t>(l.layer()));
    m.u16(detail::checked_u16(l.channels(), "channels"));
    m.u16(detail::checked_u16(l.height(), "height"));
    m.u16(detail::checked_u16(l.width(), "width"));
    b.f32s(l.values());
  }
  p.meta = std::move(m).take();
  p.body = std::move(b).take();
  return p;
}

inline std::vector<FeatureTensor> decode_raw_features(const Payload& p) {
  detail::expect_kind(p, PayloadKind::raw_features, "decode_raw_features");
  ByteReader m(p.meta, "raw_features meta");
  ByteReader b(p.body, "raw_features body");
  const int count = m.u8();
  std::vector<FeatureTensor> layers;
  for (int i = 0; i < count; ++i) {
    const int idx = m.u8(), c = m.u16(), h = m.u16(), w = m.u16();
    std::vector<float> v(static_cast<std::size_t>(c) * h * w);
    b.f32s(v);
    layers.emplace_back(idx, c, h, w, std::move(v));
  }
  detail::expect_consumed(m);
  detail::expect_consumed(b);
  return layers;
}

// ---------------------------------------------------------------------------
// Random sampling

// Keeps ceil(alpha * N) distinct cells chosen uniformly without replacement.
// The result lists the kept cells in grid order.
inline SampledPatchSet rs_encode(const PatchGrid& grid, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0) || alpha > 1.0) throw InvalidArgument("rs_encode: alpha must lie in (0, 1]");
  if (!grid.full()) throw InvalidArgument("rs_encode: grid must be full");
  const std::size_t n = grid.size();
  const std::size_t keep = ratio_count(alpha, n);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());

  SampledPatchSet out(grid.rows(), grid.cols(), grid.dim());
  out.reserve(keep);
  for (auto i : idx) out.append(grid.coord(i), grid.vector(i));
  return out;
}

// meta: rows u16, cols u16, d u32, count u32.
// body: per patch {row u16, col u16, d x f32}.
inline Payload rs_payload(const SampledPatchSet& set) {
  if (set.empty()) throw InvalidArgument("rs_payload: empty sampled set");
  Payload p;
  p.kind = PayloadKind::sampled_features;
  ByteWriter m;
  m.u16(detail::checked_u16(set.rows(), "grid rows"));
  m.u16(detail::checked_u16(set.cols(), "grid cols"));
  m.u32(set.dim());
  m.u32(static_cast<std::uint32_t>(set.size()));
  p.meta = std::move(m).take();
  ByteWriter b(set.size() * (4 + 4 * std::size_t{set.dim()}));
  for (std::size_t i = 0; i < set.size(); ++i) {
    b.u16(static_cast<std::uint16_t>(set.coord(i).row));
    b.u16(static_cast<std::uint16_t>(set.coord(i).col));
    b.f32s(set.vector(i));
  }
  p.body = std::move(b).take();
  return p;
}

inline SampledPatchSet parse_sampled_payload(const Payload& p) {
  detail::expect_kind(p, PayloadKind::sampled_features, "parse_sampled_payload");
  ByteReader m(p.meta, "sampled_features meta");
  const std::uint32_t rows = m.u16(), cols = m.u16(), d = m.u32(), count = m.u32();
  detail::expect_consumed(m);
  if (rows == 0 || cols == 0 || d == 0)
    throw FormatError(FormatError::Kind::invalid_value, "sampled_features: zero dimension");
  ByteReader b(p.body, "sampled_features body");
  SampledPatchSet set(rows, cols, d);
  set.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    GridCoord at{b.u16(), b.u16()};
    if (at.row >= rows || at.col >= cols)
      throw FormatError(FormatError::Kind::invalid_value, "sampled_features: coordinate out of bounds");
    b.f32s(set.append(at));
  }
  detail::expect_consumed(b);
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Tiled feature planes

struct TilePlan {
  std::uint16_t tiles_per_row = 0;
  std::uint16_t tiles_per_col = 0;
  std::uint16_t channel_count = 0;
  std::uint16_t tile_h = 0;
  std::uint16_t tile_w = 0;
  float value_min = 0.0f;
  float value_max = 0.0f;
  // Optional per-channel (min, max); empty means the per-tensor range applies.
  std::vector<std::pair<float, float>> channel_ranges;

  static constexpr std::size_t kRecordBytes = 5 * 2 + 2 * 4;

  int plane_height() const noexcept { return tiles_per_col * tile_h; }
  int plane_width() const noexcept { return tiles_per_row * tile_w; }

  std::pair<float, float> range(int channel) const {
    return channel_ranges.empty() ? std::pair{value_min, value_max} : channel_ranges[channel];
  }

  // The 18-byte record: u16 x5 then f32 x2.
  void write_record(ByteWriter& w) const {
    w.u16(tiles_per_row);
    w.u16(tiles_per_col);
    w.u16(channel_count);
    w.u16(tile_h);
    w.u16(tile_w);
    w.f32(value_min);
    w.f32(value_max);
  }

  static TilePlan read_record(ByteReader& r) {
    TilePlan t;
    t.tiles_per_row = r.u16();
    t.tiles_per_col = r.u16();
    t.channel_count = r.u16();
    t.tile_h = r.u16();
    t.tile_w = r.u16();
    t.value_min = r.f32();
    t.value_max = r.f32();
    if (t.tiles_per_row == 0 || t.tiles_per_col == 0 || t.channel_count == 0 || t.tile_h == 0 || t.tile_w == 0)
      throw FormatError(FormatError::Kind::invalid_value, "tile plan: zero field");
    if (std::size_t{t.tiles_per_row} * t.tiles_per_col < t.channel_count)
      throw FormatError(FormatError::Kind::invalid_value, "tile plan: too few tiles for channel count");
    if (!(t.value_min <= t.value_max))
      throw FormatError(FormatError::Kind::invalid_value, "tile plan: value_min > value_max");
    return t;
  }

  friend bool operator==(const TilePlan&, const TilePlan&) = default;
};

struct TiledPlane {
  Image8 plane;  // single channel
  TilePlan plan;
};

namespace detail {

inline std::uint8_t quantize8(float x, float lo, float hi) {
  if (!(hi > lo)) return 0;
  const double q = std::round(255.0 * (static_cast<double>(x) - lo) / (static_cast<double>(hi) - lo));
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

inline float dequantize8(std::uint8_t q, float lo, float hi) {
  return static_cast<float>(lo + (static_cast<double>(q) / 255.0) * (static_cast<double>(hi) - lo));
}

}  // namespace detail

// Quantizes a tensor to 8 bits and lays its channels out row-major on a
// near-square mosaic (tiles_per_row = ceil(sqrt(C))). Unused tiles stay 0.
inline TiledPlane tile_pack(const FeatureTensor& tensor, bool per_channel_range = false) {
  const int C = tensor.channels(), H = tensor.height(), W = tensor.width();
  TilePlan plan;
  plan.channel_count = detail::checked_u16(C, "channel count");
  plan.tile_h = detail::checked_u16(H, "tile height");
  plan.tile_w = detail::checked_u16(W, "tile width");
  int per_row = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(C))));
  while (per_row * per_row < C) ++per_row;
  while (per_row > 1 && (per_row - 1) * (per_row - 1) >= C) --per_row;
  plan.tiles_per_row = static_cast<std::uint16_t>(per_row);
  plan.tiles_per_col = static_cast<std::uint16_t>((C + per_row - 1) / per_row);
  detail::checked_u16(std::size_t{plan.tiles_per_row} * W, "plane width");
  detail::checked_u16(std::size_t{plan.tiles_per_col} * H, "plane height");

  auto vals = tensor.values();
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  plan.value_min = *lo;
  plan.value_max = *hi;
  if (per_channel_range) {
    plan.channel_ranges.resize(C);
    for (int c = 0; c < C; ++c) {
      auto ch = vals.subspan(static_cast<std::size_t>(c) * H * W, static_cast<std::size_t>(H) * W);
      const auto [clo, chi] = std::minmax_element(ch.begin(), ch.end());
      plan.channel_ranges[c] = {*clo, *chi};
    }
  }

  Image8 plane(plan.plane_height(), plan.plane_width(), 1);
  for (int c = 0; c < C; ++c) {
    const auto [rlo, rhi] = plan.range(c);
    const int oy = (c / per_row) * H, ox = (c % per_row) * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) plane.at(oy + y, ox + x) = detail::quantize8(tensor.at(c, y, x), rlo, rhi);
  }
  return {std::move(plane), std::move(plan)};
}

inline FeatureTensor tile_unpack(const Image8& plane, const TilePlan& plan, int layer = 1) {
  if (plane.channels != 1 || plane.height != plan.plane_height() || plane.width != plan.plane_width())
    throw DimensionError("tile_unpack: plane is " + std::to_string(plane.height) + "x" + std::to_string(plane.width) +
                         "x" + std::to_string(plane.channels) + ", plan expects " +
                         std::to_string(plan.plane_height()) + "x" + std::to_string(plan.plane_width()) + "x1");
  if (!plan.channel_ranges.empty() && plan.channel_ranges.size() != plan.channel_count)
    throw DimensionError("tile_unpack: per-channel range count differs from channel count");
  const int C = plan.channel_count, H = plan.tile_h, W = plan.tile_w, per_row = plan.tiles_per_row;
  FeatureTensor t(layer, C, H, W);
  for (int c = 0; c < C; ++c) {
    const auto [rlo, rhi] = plan.range(c);
    const int oy = (c / per_row) * H, ox = (c % per_row) * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) t.at(c, y, x) = detail::dequantize8(plane.at(oy + y, ox + x), rlo, rhi);
  }
  return t;
}

// Tiled payloads hold one or more planes.
//   meta: one 18-byte plan record per plane
//   body: codec id u8, quality u8, flags u8, plane count u8,
//         per plane {layer u8, [C x (f32 min, f32 max) if per-channel], stream_len u32, stream},
//         [if sparse: count u32, count x (row u16, col u16)]
// flags bit0: per-channel ranges; bit1: sparse (sampled) layout.
namespace detail {

constexpr std::uint8_t kTilePerChannel = 1;
constexpr std::uint8_t kTileSparse = 2;

struct TiledBlock {
  int layer;
  TiledPlane tiled;
};

inline Payload write_tiled(const std::vector<TiledBlock>& blocks, const ImageCodec& codec, int quality,
                           bool per_channel, const std::vector<GridCoord>* coords, std::uint32_t rows,
                           std::uint32_t cols) {
  if (quality < 0 || quality > 100) throw InvalidArgument("tiled encode: quality must be in [0, 100]");
  if (blocks.empty() || blocks.size() > 255) throw InvalidArgument("tiled encode: 1..255 planes required");
  Payload p;
  p.kind = PayloadKind::tiled_features;
  ByteWriter m;
  ByteWriter b;
  b.u8(codec.id());
  b.u8(static_cast<std::uint8_t>(quality));
  b.u8(static_cast<std::uint8_t>((per_channel ? kTilePerChannel : 0) | (coords ? kTileSparse : 0)));
  b.u8(static_cast<std::uint8_t>(blocks.size()));
  for (const auto& blk : blocks) {
    blk.tiled.plan.write_record(m);
    b.u8(static_cast<std::uint8_t>(blk.layer));
    if (per_channel)
      for (auto [lo, hi] : blk.tiled.plan.channel_ranges) {
        b.f32(lo);
        b.f32(hi);
      }
    const Bytes stream = codec.encode(blk.tiled.plane, quality);
    b.u32(static_cast<std::uint32_t>(stream.size()));
    b.raw(stream);
  }
  if (coords) {
    b.u16(checked_u16(rows, "grid rows"));
    b.u16(checked_u16(cols, "grid cols"));
    b.u32(static_cast<std::uint32_t>(coords->size()));
    for (auto c : *coords) {
      b.u16(static_cast<std::uint16_t>(c.row));
      b.u16(static_cast<std::uint16_t>(c.col));
    }
  }
  p.meta = std::move(m).take();
  p.body = std::move(b).take();
  return p;
}

struct TiledContents {
  std::vector<FeatureTensor> layers;
  bool sparse = false;
  std::uint32_t rows = 0, cols = 0;
  std::vector<GridCoord> coords;
};

inline TiledContents read_tiled(const Payload& p, const CodecRegistry& codecs) {
  expect_kind(p, PayloadKind::tiled_features, "tiled decode");
  ByteReader b(p.body, "tiled_features body");
  const auto codec = codecs.by_id(b.u8());
  b.u8();  // quality
  const auto flags = b.u8();
  const int count = b.u8();
  if (p.meta.size() != count * TilePlan::kRecordBytes)
    throw FormatError(FormatError::Kind::size_mismatch, "tiled_features: meta length disagrees with plane count");
  ByteReader m(p.meta, "tiled_features meta");
  TiledContents out;
  for (int i = 0; i < count; ++i) {
    TilePlan plan = TilePlan::read_record(m);
    const int layer = b.u8();
    if (flags & kTilePerChannel) {
      plan.channel_ranges.resize(plan.channel_count);
      for (auto& [lo, hi] : plan.channel_ranges) {
        lo = b.f32();
        hi = b.f32();
      }
    }
    const Image8 plane = codec->decode(b.raw(b.u32()));
    out.layers.push_back(tile_unpack(plane, plan, layer == 0 ? 1 : layer));
  }
  if (flags & kTileSparse) {
    out.sparse = true;
    out.rows = b.u16();
    out.cols = b.u16();
    const auto n = b.u32();
    out.coords.resize(n);
    for (auto& c : out.coords) c = {b.u16(), b.u16()};
  }
  expect_consumed(b);
  return out;
}

}  // namespace detail

// Every layer of a stack tiled into its own plane and compressed.
inline Payload encode_tiled_stack(const FeatureStack& stack, const ImageCodec& codec, int quality,
                                  bool per_channel_range = false) {
  stack.validate();
  std::vector<detail::TiledBlock> blocks;
  for (const auto& l : stack.layers) blocks.push_back({l.layer(), tile_pack(l, per_channel_range)});
  return detail::write_tiled(blocks, codec, quality, per_channel_range, nullptr, 0, 0);
}

inline std::vector<FeatureTensor> decode_tiled_stack(const Payload& p,
                                                     const CodecRegistry& codecs = CodecRegistry::instance()) {
  auto contents = detail::read_tiled(p, codecs);
  if (contents.sparse) throw InvalidArgument("decode_tiled_stack: payload carries a sampled layout");
  return std::move(contents.layers);
}

// Sampled patch vectors split back into per-layer channel segments; each
// segment is laid out as a compact C x h x w tensor (vectors in sampling
// order, row-major, padded by repeating the last vector) and tiled.
inline Payload encode_tiled_sampled(const SampledPatchSet& set, std::span<const int> layer_channels,
                                    const ImageCodec& codec, int quality, bool per_channel_range = false) {
  if (set.empty()) throw InvalidArgument("encode_tiled_sampled: empty sampled set");
  if (std::accumulate(layer_channels.begin(), layer_channels.end(), 0) != static_cast<int>(set.dim()))
    throw DimensionError("encode_tiled_sampled: layer channel counts do not sum to d");
  const std::size_t n = set.size();
  const int w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int h = static_cast<int>((n + w - 1) / w);
  std::vector<detail::TiledBlock> blocks;
  int offset = 0;
  for (std::size_t li = 0; li < layer_channels.size(); ++li) {
    const int C = layer_channels[li];
    FeatureTensor t(static_cast<int>(li) + 1, C, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::min(static_cast<std::size_t>(y) * w + x, n - 1);
        auto v = set.vector(i);
        for (int c = 0; c < C; ++c) t.at(c, y, x) = v[offset + c];
      }
    blocks.push_back({static_cast<int>(li) + 1, tile_pack(t, per_channel_range)});
    offset += C;
  }
  std::vector<GridCoord> coords(set.coords().begin(), set.coords().end());
  return detail::write_tiled(blocks, codec, quality, per_channel_range, &coords, set.rows(), set.cols());
}

inline SampledPatchSet decode_tiled_sampled(const Payload& p,
                                            const CodecRegistry& codecs = CodecRegistry::instance()) {
  auto contents = detail::read_tiled(p, codecs);
  if (!contents.sparse) throw InvalidArgument("decode_tiled_sampled: payload carries a dense layout");
  std::uint32_t d = 0;
  for (const auto& l : contents.layers) d += static_cast<std::uint32_t>(l.channels());
  const std::size_t n = contents.coords.size();
  SampledPatchSet set(contents.rows, contents.cols, d);
  set.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto out = set.append(contents.coords[i]);
    std::size_t k = 0;
    for (const auto& l : contents.layers) {
      if (static_cast<std::size_t>(l.height()) * l.width() < n)
        throw FormatError(FormatError::Kind::size_mismatch, "tiled_features: plane too small for coordinate count");
      const int y = static_cast<int>(i / l.width()), x = static_cast<int>(i % l.width());
      for (int c = 0; c < l.channels(); ++c) out[k++] = l.at(c, y, x);
    }
  }
  set.validate();
  return set;
}

}  // namespace vad
