#pragma once

// Memory-bank anomaly detector.
//
// The bank holds a greedy k-center coreset of normal patch features. A test
// patch scores its exact Euclidean distance to the nearest bank row; the
// image score is the largest patch score. Patch scores are upsampled
// (bilinear), Gaussian smoothed and min-max normalised into a pixel map.
//
// Bank file (little-endian):
//   "VBNK" | version u8 | M u32 | d u32 | seed u64 | M*d f32 rows

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vad/byte_io.hpp"
#include "vad/core_model.hpp"
#include "vad/errors.hpp"
#include "vad/random.hpp"

namespace vad {

namespace detail {

inline double sq_dist_rows(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += t * t;
  }
  return s;
}

}  // namespace detail

// Greedy farthest-point selection of `count` rows starting from `start`.
// Ties go to the lowest row index.
inline std::vector<std::size_t> coreset_select_from(const MatrixView& features, std::size_t count,
                                                    std::size_t start) {
  const std::size_t n = features.rows, d = features.cols;
  if (n == 0) throw InvalidArgument("coreset_select: empty input");
  if (start >= n) throw InvalidArgument("coreset_select: start index out of range");
  count = std::min(count, n);
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  if (count == n) {
    for (std::size_t i = 0; i < n; ++i) chosen.push_back(i);
    return chosen;
  }
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t next = start;
  while (chosen.size() < count) {
    chosen.push_back(next);
    const float* c = features.data + next * d;
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = detail::sq_dist_rows(features.data + i * d, c, d);
      if (dd < min_d[i]) min_d[i] = dd;
      if (min_d[i] > best) {
        best = min_d[i];
        arg = i;
      }
    }
    next = arg;
  }
  return chosen;
}

// Exactly ceil(ratio * n) indices; the first is drawn from the seeded generator.
inline std::vector<std::size_t> coreset_select(const MatrixView& features, double ratio, std::uint64_t seed) {
  if (features.rows == 0) throw InvalidArgument("coreset_select: empty input");
  const std::size_t count = ratio_count(ratio, features.rows);
  Rng rng(seed);
  return coreset_select_from(features, count, rng.below(features.rows));
}

struct MemoryBank {
  static constexpr std::uint8_t kVersion = 1;

  FloatMatrix entries;  // M x d
  double coreset_ratio = 1.0;
  std::uint64_t source_count = 0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return entries.rows; }
  std::size_t dim() const noexcept { return entries.cols; }
};

inline MemoryBank build_memory_bank_from_matrix(const MatrixView& pooled, double ratio, std::uint64_t seed) {
  if (pooled.rows == 0) throw InvalidArgument("build_memory_bank: no patches");
  const auto idx = coreset_select(pooled, ratio, seed);
  MemoryBank bank;
  bank.entries = FloatMatrix(idx.size(), pooled.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = pooled.row(idx[i]);
    std::copy(src.begin(), src.end(), bank.entries.row(i).begin());
  }
  bank.coreset_ratio = ratio;
  bank.source_count = pooled.rows;
  bank.seed = seed;
  return bank;
}

// Pools every patch of every grid, then keeps a coreset.
inline MemoryBank build_memory_bank(std::span<const PatchGrid> normal_grids, double ratio, std::uint64_t seed) {
  if (normal_grids.empty()) throw InvalidArgument("build_memory_bank: no training grids");
  const std::uint32_t d = normal_grids.front().dim();
  std::size_t total = 0;
  for (const auto& g : normal_grids) {
    if (g.dim() != d) throw DimensionError("build_memory_bank: inconsistent patch dimensionality");
    total += g.size();
  }
  std::vector<float> pooled;
  pooled.reserve(total * d);
  for (const auto& g : normal_grids) pooled.insert(pooled.end(), g.values().begin(), g.values().end());
  return build_memory_bank_from_matrix(MatrixView(pooled.data(), total, d), ratio, seed);
}

// Patch scores laid out on the full grid (row-major).
struct ScoreGrid {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;

  double at(std::uint32_t r, std::uint32_t c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  double max() const { return *std::max_element(values.begin(), values.end()); }
};

// Exact nearest-bank-row distance for each patch, in the patch set's order.
inline std::vector<double> nearest_distances(const MemoryBank& bank, const MatrixView& patches) {
  if (patches.cols != bank.dim())
    throw DimensionError("score_patches: patch d = " + std::to_string(patches.cols) + " but bank d = " +
                         std::to_string(bank.dim()));
  if (bank.size() == 0) throw InvalidArgument("score_patches: empty memory bank");
  const std::size_t d = bank.dim();
  std::vector<double> out(patches.rows);
  for (std::size_t i = 0; i < patches.rows; ++i) {
    const float* p = patches.data + i * d;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bank.size(); ++j) best = std::min(best, detail::sq_dist_rows(p, bank.entries.data.data() + j * d, d));
    out[i] = std::sqrt(best);
  }
  return out;
}

// Scores every available patch; cells missing from a sampled set take the
// score of the nearest sampled cell (grid distance, first in row-major order
// on ties).
inline ScoreGrid score_patches(const MemoryBank& bank, const PatchGrid& patches) {
  if (patches.empty()) throw InvalidArgument("score_patches: no patches");
  const auto dist = nearest_distances(bank, patches.matrix());
  ScoreGrid g{patches.rows(), patches.cols(), {}};
  g.values.assign(g.rows * std::size_t{g.cols}, 0.0);
  std::vector<std::int64_t> owner(g.values.size(), -1);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto c = patches.coord(i);
    owner[static_cast<std::size_t>(c.row) * g.cols + c.col] = static_cast<std::int64_t>(i);
  }
  if (patches.size() == g.values.size()) {
    for (std::size_t cell = 0; cell < g.values.size(); ++cell) g.values[cell] = dist[owner[cell]];
    return g;
  }
  // Sampled cells in row-major order so the first hit wins ties.
  std::vector<std::size_t> sampled;
  for (std::size_t cell = 0; cell < owner.size(); ++cell)
    if (owner[cell] >= 0) sampled.push_back(cell);
  for (std::size_t cell = 0; cell < g.values.size(); ++cell) {
    if (owner[cell] >= 0) {
      g.values[cell] = dist[owner[cell]];
      continue;
    }
    const auto r = static_cast<std::int64_t>(cell / g.cols), c = static_cast<std::int64_t>(cell % g.cols);
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::size_t best_cell = sampled.front();
    for (auto s : sampled) {
      const auto sr = static_cast<std::int64_t>(s / g.cols), sc = static_cast<std::int64_t>(s % g.cols);
      const auto dd = (sr - r) * (sr - r) + (sc - c) * (sc - c);
      if (dd < best) {
        best = dd;
        best_cell = s;
      }
    }
    g.values[cell] = dist[owner[best_cell]];
  }
  return g;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) s += k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

// Separable convolution with edge replication.
inline void gaussian_blur(std::vector<double>& img, int h, int w, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      img[static_cast<std::size_t>(y) * w + x] = s;
    }
}

}  // namespace detail

// Bilinear upsampling (pixel-centre aligned) of the patch scores to
// out_h x out_w, Gaussian smoothing (sigma in pixels, truncated at 4 sigma,
// sigma = 0 disables it) and min-max normalisation to [0, 1]. A constant map
// normalises to all zeros.
inline FloatMatrix make_anomaly_map(const ScoreGrid& scores, int out_h, int out_w, double sigma) {
  if (out_h < static_cast<int>(scores.rows) || out_w < static_cast<int>(scores.cols))
    throw InvalidArgument("make_anomaly_map: output smaller than the patch grid");
  if (sigma < 0.0) throw InvalidArgument("make_anomaly_map: sigma must be non-negative");
  const int R = static_cast<int>(scores.rows), C = static_cast<int>(scores.cols);
  std::vector<double> img(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + 0.5) * R / out_h - 0.5, 0.0, static_cast<double>(R - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, R - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + 0.5) * C / out_w - 0.5, 0.0, static_cast<double>(C - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, C - 1);
      const double fx = sx - x0;
      const double top = scores.at(y0, x0) * (1 - fx) + scores.at(y0, x1) * fx;
      const double bot = scores.at(y1, x0) * (1 - fx) + scores.at(y1, x1) * fx;
      img[static_cast<std::size_t>(y) * out_w + x] = top * (1 - fy) + bot * fy;
    }
  }
  if (sigma > 0.0) detail::gaussian_blur(img, out_h, out_w, sigma);

  FloatMatrix map(out_h, out_w);
  const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
  const double mn = *lo, span = *hi - *lo;
  if (span > 0.0)
    for (std::size_t i = 0; i < img.size(); ++i) map.data[i] = static_cast<float>(std::clamp((img[i] - mn) / span, 0.0, 1.0));
  return map;
}

struct AnomalyResult {
  std::string image_id;
  double image_score = 0.0;
  ScoreGrid patch_scores;
  FloatMatrix anomaly_map;
};

struct DetectOptions {
  int out_h = 224;
  int out_w = 224;
  double sigma = 4.0;
};

// Image score is the raw maximum patch distance; normalisation to [0, 1]
// happens over the evaluated set, not here.
inline AnomalyResult detect(const MemoryBank& bank, const PatchGrid& input, const DetectOptions& opt = {},
                            std::string image_id = {}) {
  AnomalyResult r;
  r.image_id = std::move(image_id);
  r.patch_scores = score_patches(bank, input);
  r.image_score = r.patch_scores.max();
  r.anomaly_map = make_anomaly_map(r.patch_scores, opt.out_h, opt.out_w, opt.sigma);
  return r;
}

inline Bytes write_memory_bank(const MemoryBank& bank) {
  ByteWriter w(25 + bank.entries.data.size() * 4);
  w.magic("VBNK");
  w.u8(MemoryBank::kVersion);
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  w.u64(bank.seed);
  w.f32s(bank.entries.data);
  return std::move(w).take();
}

// The file does not carry the coreset ratio; a loaded bank reports itself as
// its own full source (ratio 1, source_count = M).
inline MemoryBank read_memory_bank(std::span<const std::uint8_t> data) {
  ByteReader r(data, "memory bank");
  r.expect_magic("VBNK");
  const auto version = r.u8();
  if (version != MemoryBank::kVersion)
    throw FormatError(FormatError::Kind::unsupported_version,
                      "memory bank: unsupported version " + std::to_string(version));
  const std::size_t M = r.u32(), d = r.u32();
  MemoryBank bank;
  bank.seed = r.u64();
  if (M == 0 || d == 0) throw FormatError(FormatError::Kind::invalid_value, "memory bank: zero M or d");
  if (r.remaining() < M * d * 4) throw FormatError(FormatError::Kind::truncated, "memory bank: truncated rows");
  if (r.remaining() > M * d * 4) throw FormatError(FormatError::Kind::size_mismatch, "memory bank: trailing bytes");
  bank.entries = FloatMatrix(M, d);
  r.f32s(bank.entries.data);
  bank.coreset_ratio = 1.0;
  bank.source_count = M;
  return bank;
}

}  // namespace vad
