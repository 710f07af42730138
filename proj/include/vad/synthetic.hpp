#pragma once

// Deterministic synthetic dataset standing in for CNN features at desk scale.
//
// Each image draws a low-rank smooth latent field z(u, v) in R^rank over the
// patch grid (a few random plane waves per latent channel, unit variance).
// Layer l observes mu_l + W_l z at its own stride plus white noise; mu_l,
// W_l are fixed per category. An anomalous image adds delta_sigma times a
// fixed per-category sign pattern to every feature whose cell overlaps a
// random rectangle of patches. The RGB image renders the first three latent
// channels (and the same rectangle) so the image and feature views agree.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vad/core_model.hpp"
#include "vad/data_io.hpp"
#include "vad/errors.hpp"
#include "vad/metrics.hpp"
#include "vad/random.hpp"

namespace vad {

struct SyntheticLayerSpec {
  int channels = 0;
  int stride = 1;  // in base-grid cells
};

struct SyntheticSpec {
  std::string category = "synthetic";
  CategoryKind kind = CategoryKind::object;
  int grid = 28;
  int image_side = 224;
  std::vector<SyntheticLayerSpec> layers = {{128, 1}, {32, 2}, {16, 4}};
  int rank = 6;
  int waves = 3;
  double noise_std = 0.1;
  double delta_sigma = 6.0;
  int min_defect_side = 3;
  int max_defect_side = 7;
  double pixel_gain = 24.0;

  void validate() const {
    if (grid <= 0 || image_side <= 0 || image_side % grid != 0)
      throw InvalidArgument("SyntheticSpec: image side must be a positive multiple of the grid");
    if (layers.empty()) throw InvalidArgument("SyntheticSpec: no layers");
    for (const auto& l : layers)
      if (l.channels <= 0 || l.stride <= 0 || grid % l.stride != 0)
        throw InvalidArgument("SyntheticSpec: layer stride must divide the grid");
    if (rank < 3) throw InvalidArgument("SyntheticSpec: rank must be at least 3 (RGB rendering)");
    if (min_defect_side <= 0 || max_defect_side < min_defect_side || max_defect_side > grid)
      throw InvalidArgument("SyntheticSpec: invalid defect side range");
  }

  std::uint32_t patch_dim() const {
    std::uint32_t d = 0;
    for (const auto& l : layers) d += static_cast<std::uint32_t>(l.channels);
    return d;
  }
};

struct SyntheticSample {
  FeatureStack stack;  // carries label, category and the pixel mask
  Image8 image;
};

struct SyntheticCategory {
  SyntheticSpec spec;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};

namespace detail {

struct Wave {
  double amp, fu, fv, phase;
};

inline std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace detail

inline SyntheticCategory generate_synthetic(const SyntheticSpec& spec, int n_train, int n_test,
                                            double anomaly_fraction, std::uint64_t seed) {
  spec.validate();
  if (n_train < 1) throw InvalidArgument("generate_synthetic: n_train must be at least 1");
  if (n_test < 0) throw InvalidArgument("generate_synthetic: n_test must be non-negative");
  if (anomaly_fraction < 0.0 || anomaly_fraction > 1.0)
    throw InvalidArgument("generate_synthetic: anomaly_fraction must lie in [0, 1]");

  // Category-level parameters.
  Rng cat_rng(derive_seed(seed, detail::name_hash(spec.category)));
  struct LayerModel {
    std::vector<double> mu, W, sign;
  };
  std::vector<LayerModel> models;
  for (const auto& l : spec.layers) {
    LayerModel m;
    m.mu.resize(l.channels);
    m.W.resize(static_cast<std::size_t>(l.channels) * spec.rank);
    m.sign.resize(l.channels);
    for (auto& v : m.mu) v = cat_rng.normal();
    for (auto& v : m.W) v = cat_rng.normal() / std::sqrt(static_cast<double>(spec.rank));
    for (auto& v : m.sign) v = cat_rng.uniform() < 0.5 ? -1.0 : 1.0;
    models.push_back(std::move(m));
  }
  double rgb_sign[3];
  for (auto& s : rgb_sign) s = cat_rng.uniform() < 0.5 ? -1.0 : 1.0;

  const int n_anomalous = static_cast<int>(std::llround(anomaly_fraction * n_test));
  const int px_per_cell = spec.image_side / spec.grid;

  auto make = [&](int index, bool anomalous, const char* split) {
    Rng rng(derive_seed(derive_seed(seed, detail::name_hash(spec.category)), static_cast<std::uint64_t>(index)));
    std::vector<detail::Wave> waves(static_cast<std::size_t>(spec.rank) * spec.waves);
    const double amp_scale = std::sqrt(2.0 / spec.waves);
    for (auto& w : waves)
      w = {rng.normal() * amp_scale, rng.uniform(-2.0, 2.0) / spec.grid, rng.uniform(-2.0, 2.0) / spec.grid,
           rng.uniform(0.0, 2.0 * std::numbers::pi)};
    auto latent = [&](int k, double u, double v) {
      double s = 0.0;
      for (int t = 0; t < spec.waves; ++t) {
        const auto& w = waves[static_cast<std::size_t>(k) * spec.waves + t];
        s += w.amp * std::cos(2.0 * std::numbers::pi * (w.fu * u + w.fv * v) + w.phase);
      }
      return s;
    };

    int r0 = 0, c0 = 0, rh = 0, cw = 0;
    if (anomalous) {
      rh = spec.min_defect_side + static_cast<int>(rng.below(spec.max_defect_side - spec.min_defect_side + 1));
      cw = spec.min_defect_side + static_cast<int>(rng.below(spec.max_defect_side - spec.min_defect_side + 1));
      r0 = static_cast<int>(rng.below(spec.grid - rh + 1));
      c0 = static_cast<int>(rng.below(spec.grid - cw + 1));
    }
    auto in_defect = [&](int y0, int y1, int x0, int x1) {  // half-open base-grid span
      return anomalous && y0 < r0 + rh && r0 < y1 && x0 < c0 + cw && c0 < x1;
    };

    SyntheticSample s;
    s.stack.image_id = spec.category + "_" + split + "_" + std::to_string(index);
    s.stack.category = spec.category;
    s.stack.label = anomalous ? Label::anomalous : Label::normal;
    std::vector<double> z(spec.rank);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      const auto& l = spec.layers[li];
      const auto& m = models[li];
      const int side = spec.grid / l.stride;
      std::vector<float> vals(static_cast<std::size_t>(l.channels) * side * side);
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          const double u = (y + 0.5) * l.stride, v = (x + 0.5) * l.stride;
          for (int k = 0; k < spec.rank; ++k) z[k] = latent(k, u, v);
          const bool hit = in_defect(y * l.stride, (y + 1) * l.stride, x * l.stride, (x + 1) * l.stride);
          for (int c = 0; c < l.channels; ++c) {
            double f = m.mu[c];
            for (int k = 0; k < spec.rank; ++k) f += m.W[static_cast<std::size_t>(c) * spec.rank + k] * z[k];
            f += spec.noise_std * rng.normal();
            if (hit) f += spec.delta_sigma * m.sign[c];
            vals[(static_cast<std::size_t>(c) * side + y) * side + x] = static_cast<float>(f);
          }
        }
      s.stack.layers.emplace_back(static_cast<int>(li) + 1, l.channels, side, side, std::move(vals));
    }

    s.image = Image8(spec.image_side, spec.image_side, 3);
    Image8 mask(spec.image_side, spec.image_side, 1);
    for (int py = 0; py < spec.image_side; ++py)
      for (int px = 0; px < spec.image_side; ++px) {
        const double u = (py + 0.5) / px_per_cell, v = (px + 0.5) / px_per_cell;
        const int cy = py / px_per_cell, cx = px / px_per_cell;
        const bool hit = in_defect(cy, cy + 1, cx, cx + 1);
        for (int c = 0; c < 3; ++c) {
          double val = 128.0 + spec.pixel_gain * latent(c, u, v);
          if (hit) val += spec.pixel_gain * spec.delta_sigma * rgb_sign[c];
          s.image.at(py, px, c) = static_cast<std::uint8_t>(std::clamp(std::round(val), 0.0, 255.0));
        }
        if (hit) mask.at(py, px) = 1;
      }
    s.stack.mask = std::move(mask);
    return s;
  };

  SyntheticCategory out;
  out.spec = spec;
  for (int i = 0; i < n_train; ++i) out.train.push_back(make(i, false, "train"));
  // Anomalous test images are interleaved evenly through the split.
  for (int i = 0; i < n_test; ++i) {
    const bool anomalous = n_anomalous > 0 && (static_cast<long long>(i) * n_anomalous) / n_test !=
                                                  (static_cast<long long>(i + 1) * n_anomalous) / n_test;
    out.test.push_back(make(n_train + i, anomalous, "test"));
  }
  return out;
}

// Writes feature files, image and mask dumps and index.json under root.
inline PreparedCategory write_synthetic(const SyntheticCategory& cat, const fs::path& root) {
  PreparedCategory pc;
  pc.name = cat.spec.category;
  pc.kind = cat.spec.kind;
  auto dump = [&](const SyntheticSample& s, const std::string& split) {
    PreparedEntry e;
    e.id = s.stack.image_id;
    e.label = s.stack.label;
    const std::string base = pc.name + "/" + split + "/" + e.id;
    e.features = base + ".vftr";
    e.image = base + ".vimg";
    FeatureFile f{s.stack, {}};
    if (s.stack.label == Label::anomalous && s.stack.mask) {
      e.mask = base + "_mask.vimg";
      f.mask_ref = e.mask;
      write_file_bytes(root / e.mask, write_raw_image(*s.stack.mask));
    }
    f.stack.mask.reset();
    save_feature_file(root / e.features, f);
    write_file_bytes(root / e.image, write_raw_image(s.image));
    return e;
  };
  for (const auto& s : cat.train) pc.train.push_back(dump(s, "train"));
  for (const auto& s : cat.test) pc.test.push_back(dump(s, "test"));
  return pc;
}

}  // namespace vad
