#pragma once

// Transmission scenarios: an edge stage g that turns one input into a
// Payload, and a server stage that turns the serialized payload back into
// patch features for the detector. The server stage only ever sees bytes.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vad/codecs.hpp"
#include "vad/core_model.hpp"
#include "vad/errors.hpp"
#include "vad/image_codec.hpp"
#include "vad/pq.hpp"

namespace vad {

// Thrown when a scenario cannot run on the data it was given.
class ScenarioError : public Error {
 public:
  using Error::Error;
};

enum class Strategy {
  raw_image,       // pixels as-is, server extracts features
  image_codec,     // still-image codec on pixels, server extracts features
  raw_features,    // edge feature maps, uncompressed
  sampling,        // random subset of patch vectors
  pq,              // product-quantized patch vectors
  sampling_pq,     // random subset, then product quantization
  tiled,           // feature maps tiled into planes and image-coded
  sampling_tiled,  // random subset, per-layer tiled and image-coded
};

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::raw_image: return "raw_image";
    case Strategy::image_codec: return "image_codec";
    case Strategy::raw_features: return "raw_features";
    case Strategy::sampling: return "sampling";
    case Strategy::pq: return "pq";
    case Strategy::sampling_pq: return "sampling_pq";
    case Strategy::tiled: return "tiled";
    case Strategy::sampling_tiled: return "sampling_tiled";
  }
  return "unknown";
}

inline std::optional<Strategy> strategy_from_string(const std::string& s) {
  for (auto v : {Strategy::raw_image, Strategy::image_codec, Strategy::raw_features, Strategy::sampling, Strategy::pq,
                 Strategy::sampling_pq, Strategy::tiled, Strategy::sampling_tiled})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

// Edge-side feature extraction happens when the strategy transmits features.
inline bool uses_edge_features(Strategy s) { return s != Strategy::raw_image && s != Strategy::image_codec; }
inline bool uses_sampling(Strategy s) {
  return s == Strategy::sampling || s == Strategy::sampling_pq || s == Strategy::sampling_tiled;
}
inline bool uses_pq(Strategy s) { return s == Strategy::pq || s == Strategy::sampling_pq; }
inline bool uses_codec(Strategy s) {
  return s == Strategy::image_codec || s == Strategy::tiled || s == Strategy::sampling_tiled;
}

struct Scenario {
  std::string name;
  Strategy strategy = Strategy::raw_image;
  double alpha = 1.0;
  int quality = 80;
  std::string codec = "deflate";
  bool per_channel_range = false;
  bool include_codebook = false;
  double edge_model_params = 0.0;  // compared against the compute budget

  void validate() const {
    if (name.empty()) throw ConfigError("scenario without a name");
    if (uses_sampling(strategy) && (!(alpha > 0.0) || alpha > 1.0))
      throw ConfigError("scenario " + name + ": alpha must lie in (0, 1]");
    if (uses_codec(strategy) && (quality < 0 || quality > 100))
      throw ConfigError("scenario " + name + ": quality must lie in [0, 100]");
  }
};

// Parameter count of a MobileNetV2-class edge backbone.
inline constexpr double kEdgeBackboneParams = 3.5e6;

inline const std::vector<std::string>& builtin_scenario_names() {
  static const std::vector<std::string> names = {"original", "raw_features", "webp",   "rs25",
                                                 "pq",       "rs50_pq",      "rs50_webp"};
  return names;
}

// The seven built-in scenarios. `image_codec` backs "webp", `feature_codec`
// backs the tiled hybrid.
inline std::optional<Scenario> builtin_scenario(const std::string& name, const std::string& image_codec = "deflate",
                                                const std::string& feature_codec = "jpeg", int quality = 80) {
  Scenario s;
  s.name = name;
  s.quality = quality;
  if (name == "original") {
    s.strategy = Strategy::raw_image;
  } else if (name == "raw_features") {
    s.strategy = Strategy::raw_features;
  } else if (name == "webp") {
    s.strategy = Strategy::image_codec;
    s.codec = image_codec;
  } else if (name == "rs25") {
    s.strategy = Strategy::sampling;
    s.alpha = 0.25;
  } else if (name == "pq") {
    s.strategy = Strategy::pq;
  } else if (name == "rs50_pq") {
    s.strategy = Strategy::sampling_pq;
    s.alpha = 0.5;
  } else if (name == "rs50_webp") {
    s.strategy = Strategy::sampling_tiled;
    s.alpha = 0.5;
    s.codec = feature_codec;
  } else {
    return std::nullopt;
  }
  if (uses_edge_features(s.strategy)) s.edge_model_params = kEdgeBackboneParams;
  return s;
}

// Server-side feature extractor for image scenarios: block statistics of
// the decoded pixels. Each cell x cell block becomes one patch whose vector
// holds the mean of every channel over a sub x sub split of the block,
// scaled to [0, 1].
struct PooledPixelExtractor {
  int cell = 8;
  int sub = 2;

  PatchGrid extract(const Image8& img) const {
    if (cell <= 0 || sub <= 0 || cell % sub != 0) throw InvalidArgument("PooledPixelExtractor: cell must divide by sub");
    if (img.height % cell != 0 || img.width % cell != 0)
      throw DimensionError("PooledPixelExtractor: image sides must be multiples of the cell size");
    const int rows = img.height / cell, cols = img.width / cell, piece = cell / sub;
    const auto d = static_cast<std::uint32_t>(img.channels * sub * sub);
    PatchGrid g(static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols), d);
    g.reserve(static_cast<std::size_t>(rows) * cols);
    const double norm = 1.0 / (255.0 * piece * piece);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        auto v = g.append({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
        std::size_t k = 0;
        for (int ch = 0; ch < img.channels; ++ch)
          for (int sy = 0; sy < sub; ++sy)
            for (int sx = 0; sx < sub; ++sx) {
              unsigned sum = 0;
              for (int y = 0; y < piece; ++y)
                for (int x = 0; x < piece; ++x) sum += img.at(r * cell + sy * piece + y, c * cell + sx * piece + x, ch);
              v[k++] = static_cast<float>(sum * norm);
            }
      }
    return g;
  }
};

// What the edge device holds for one image.
struct EdgeInput {
  const Image8* image = nullptr;
  const FeatureStack* features = nullptr;
};

// Pre-shared state available to both stages.
struct StageContext {
  std::shared_ptr<const Codebook> codebook;
  const CodecRegistry* codecs = &CodecRegistry::instance();
  PooledPixelExtractor extractor;
};

// The edge stage g: one input -> one payload.
inline Payload edge_encode(const Scenario& sc, const EdgeInput& in, const StageContext& ctx, std::uint64_t seed) {
  if (uses_edge_features(sc.strategy)) {
    if (!in.features) throw ScenarioError("scenario " + sc.name + " needs edge features but the sample has none");
  } else if (!in.image) {
    throw ScenarioError("scenario " + sc.name + " needs the image but the sample has none");
  }
  auto codec = [&] { return ctx.codecs->by_name(sc.codec); };
  auto need_codebook = [&]() -> const Codebook& {
    if (!ctx.codebook) throw ScenarioError("scenario " + sc.name + " needs a trained codebook");
    return *ctx.codebook;
  };
  switch (sc.strategy) {
    case Strategy::raw_image: return encode_raw_image(*in.image);
    case Strategy::image_codec: return image_encode(*in.image, sc.quality, *codec());
    case Strategy::raw_features: return encode_raw_features(*in.features);
    case Strategy::tiled: return encode_tiled_stack(*in.features, *codec(), sc.quality, sc.per_channel_range);
    default: break;
  }
  const PatchGrid grid = build_patch_grid(*in.features);
  switch (sc.strategy) {
    case Strategy::sampling: return rs_payload(rs_encode(grid, sc.alpha, seed));
    case Strategy::pq: {
      const auto& cb = need_codebook();
      return pq_payload(pq_encode(grid.matrix(), cb), sc.include_codebook, &cb, {grid.rows(), grid.cols(), {}});
    }
    case Strategy::sampling_pq: {
      const auto& cb = need_codebook();
      const auto set = rs_encode(grid, sc.alpha, seed);
      PqLayout layout{set.rows(), set.cols(), std::vector<GridCoord>(set.coords().begin(), set.coords().end())};
      return pq_payload(pq_encode(set.matrix(), cb), sc.include_codebook, &cb, layout);
    }
    case Strategy::sampling_tiled: {
      std::vector<int> channels;
      for (const auto& l : in.features->layers) channels.push_back(l.channels());
      return encode_tiled_sampled(rs_encode(grid, sc.alpha, seed), channels, *codec(), sc.quality,
                                  sc.per_channel_range);
    }
    default: break;
  }
  throw ScenarioError("scenario " + sc.name + ": unsupported strategy");
}

namespace detail {

inline void expect_payload_kind(const Scenario& sc, const Payload& p, PayloadKind k) {
  if (p.kind != k)
    throw ScenarioError("scenario " + sc.name + " (" + to_string(sc.strategy) + ") received a " + to_string(p.kind) +
                        " payload");
}

inline PatchGrid grid_from_codes(const PqPayloadContents& pc, const Codebook& cb) {
  const FloatMatrix decoded = pq_decode(pc.codes, cb);
  PatchGrid g(pc.layout.rows, pc.layout.cols, cb.dim());
  g.reserve(decoded.rows);
  for (std::size_t i = 0; i < decoded.rows; ++i) {
    const GridCoord at = pc.layout.coords.empty()
                             ? GridCoord{static_cast<std::uint32_t>(i / pc.layout.cols),
                                         static_cast<std::uint32_t>(i % pc.layout.cols)}
                             : pc.layout.coords[i];
    g.append(at, decoded.row(i));
  }
  g.validate();
  return g;
}

}  // namespace detail

// Decoded server-side representation: the payload turned back into data,
// before any server feature extraction.
struct ServerDecoded {
  std::optional<Image8> image;
  std::optional<PatchGrid> grid;
};

// Payload decoding only (the server's "decoding" component).
inline ServerDecoded server_decode(const Scenario& sc, std::span<const std::uint8_t> wire, const StageContext& ctx) {
  const Payload p = parse_payload(wire);
  ServerDecoded out;
  switch (sc.strategy) {
    case Strategy::raw_image:
      detail::expect_payload_kind(sc, p, PayloadKind::raw_image);
      out.image = decode_raw_image(p);
      return out;
    case Strategy::image_codec:
      detail::expect_payload_kind(sc, p, PayloadKind::compressed_image);
      out.image = image_decode(p, *ctx.codecs);
      return out;
    case Strategy::raw_features: {
      detail::expect_payload_kind(sc, p, PayloadKind::raw_features);
      FeatureStack st;
      st.layers = decode_raw_features(p);
      out.grid = build_patch_grid(st);
      return out;
    }
    case Strategy::tiled: {
      detail::expect_payload_kind(sc, p, PayloadKind::tiled_features);
      FeatureStack st;
      st.layers = decode_tiled_stack(p, *ctx.codecs);
      out.grid = build_patch_grid(st);
      return out;
    }
    case Strategy::sampling:
      detail::expect_payload_kind(sc, p, PayloadKind::sampled_features);
      out.grid = parse_sampled_payload(p);
      return out;
    case Strategy::pq:
    case Strategy::sampling_pq: {
      detail::expect_payload_kind(sc, p, PayloadKind::pq_codes);
      const auto pc = parse_pq_payload(p);
      const Codebook* cb = pc.codebook ? &*pc.codebook : ctx.codebook.get();
      if (!cb) throw ScenarioError("scenario " + sc.name + ": no codebook available on the server");
      out.grid = detail::grid_from_codes(pc, *cb);
      return out;
    }
    case Strategy::sampling_tiled:
      detail::expect_payload_kind(sc, p, PayloadKind::tiled_features);
      out.grid = decode_tiled_sampled(p, *ctx.codecs);
      return out;
  }
  throw ScenarioError("scenario " + sc.name + ": unsupported strategy");
}

// Server feature extraction for image payloads; feature payloads pass through.
inline PatchGrid server_features(ServerDecoded decoded, const StageContext& ctx) {
  if (decoded.grid) return std::move(*decoded.grid);
  if (!decoded.image) throw ScenarioError("server stage produced neither image nor features");
  return ctx.extractor.extract(*decoded.image);
}

}  // namespace vad
