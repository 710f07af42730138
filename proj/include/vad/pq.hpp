#pragma once

// Product quantization of patch vectors.
//
// A d-dimensional vector is split into m contiguous sub-vectors of length
// sub_dim = d / m; each sub-vector is replaced by the index of its nearest
// centroid in that subspace's K-entry codebook. Codebooks are trained with
// seeded k-means++ initialisation followed by Lloyd iterations.
//
// Codebook file (little-endian):
//   "VPQC" | version u8 | m u16 | K u32 | sub_dim u16 | seed u64 |
//   centroids f32 in (subspace, centroid, component) order

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "vad/byte_io.hpp"
#include "vad/codecs.hpp"
#include "vad/core_model.hpp"
#include "vad/errors.hpp"
#include "vad/random.hpp"

namespace vad {

struct Codebook {
  static constexpr std::uint8_t kVersion = 1;

  std::uint32_t m = 0;
  std::uint32_t K = 0;
  std::uint32_t sub_dim = 0;
  std::vector<float> centroids;  // m * K * sub_dim
  std::uint64_t trained_on = 0;
  std::uint64_t seed = 0;

  std::uint32_t dim() const noexcept { return m * sub_dim; }
  std::uint32_t bits_per_code() const noexcept { return static_cast<std::uint32_t>(std::countr_zero(K)); }

  std::span<const float> centroid(std::uint32_t sub, std::uint32_t k) const {
    return {centroids.data() + (static_cast<std::size_t>(sub) * K + k) * sub_dim, sub_dim};
  }
  std::span<float> centroid(std::uint32_t sub, std::uint32_t k) {
    return {centroids.data() + (static_cast<std::size_t>(sub) * K + k) * sub_dim, sub_dim};
  }

  void validate() const {
    if (m == 0 || K == 0 || sub_dim == 0) throw InvalidArgument("Codebook: m, K and sub_dim must be positive");
    if (!std::has_single_bit(K)) throw InvalidArgument("Codebook: K must be a power of two");
    if (centroids.size() != static_cast<std::size_t>(m) * K * sub_dim)
      throw DimensionError("Codebook: centroid block size mismatch");
    for (float v : centroids)
      if (!std::isfinite(v)) throw InvalidArgument("Codebook: non-finite centroid");
  }

  // Bit-identity of the learned parameters (trained_on is not serialized).
  bool same_parameters(const Codebook& o) const {
    return m == o.m && K == o.K && sub_dim == o.sub_dim && seed == o.seed && centroids == o.centroids;
  }
};

struct PqCodes {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint32_t K = 0;
  std::vector<std::uint32_t> codes;  // n * m, row-major

  std::uint32_t at(std::size_t i, std::size_t j) const { return codes[i * m + j]; }

  // Packed body length: ceil(n * m * log2(K) / 8).
  std::size_t packed_bytes() const {
    const std::uint64_t bits = std::uint64_t{n} * m * static_cast<std::uint64_t>(std::countr_zero(K));
    return static_cast<std::size_t>((bits + 7) / 8);
  }

  friend bool operator==(const PqCodes&, const PqCodes&) = default;
};

struct PqTrainOptions {
  std::uint32_t m = 8;
  std::uint32_t K = 256;
  std::uint32_t max_iters = 25;
  std::uint64_t seed = 0;
};

// Quantization error after every assignment step, per subspace.
struct PqTrainTrace {
  std::vector<std::vector<double>> errors;
  std::vector<std::uint32_t> iterations;
};

namespace detail {

inline double sq_dist(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = static_cast<double>(a[i]) - b[i];
    s += t * t;
  }
  return s;
}

// Nearest centroid of one subspace; ties resolve to the lowest index.
inline std::uint32_t nearest_centroid(const Codebook& cb, std::uint32_t sub, std::span<const float> x,
                                      double* best_out = nullptr) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t k = 0; k < cb.K; ++k) {
    const double d = sq_dist(x, cb.centroid(sub, k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

inline std::vector<double> train_subspace(const MatrixView& data, Codebook& cb, std::uint32_t sub,
                                          std::uint32_t max_iters) {
  const std::size_t n = data.rows;
  const std::uint32_t sd = cb.sub_dim, K = cb.K;
  const std::size_t off = static_cast<std::size_t>(sub) * sd;
  auto slice = [&](std::size_t i) { return data.row(i).subspan(off, sd); };
  auto set_centroid = [&](std::uint32_t k, std::span<const float> x) {
    std::copy(x.begin(), x.end(), cb.centroid(sub, k).begin());
  };

  // k-means++ seeding
  Rng rng(derive_seed(cb.seed, sub));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::uint32_t k = 0; k < K; ++k) {
    set_centroid(k, slice(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(slice(i), cb.centroid(sub, k)));
      total += nearest[i];
    }
    if (k + 1 == K) break;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > r && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (nearest[pick] == 0.0 && pick > 0) --pick;
    } else {
      pick = rng.below(n);
    }
  }

  std::vector<double> mean(sd, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = slice(i);
    for (std::uint32_t c = 0; c < sd; ++c) mean[c] += x[c];
  }
  for (auto& v : mean) v /= static_cast<double>(n);
  std::vector<std::size_t> by_spread(n);
  {
    std::vector<double> spread(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = slice(i);
      double s = 0.0;
      for (std::uint32_t c = 0; c < sd; ++c) s += (x[c] - mean[c]) * (x[c] - mean[c]);
      spread[i] = s;
    }
    for (std::size_t i = 0; i < n; ++i) by_spread[i] = i;
    std::stable_sort(by_spread.begin(), by_spread.end(),
                     [&](std::size_t a, std::size_t b) { return spread[a] > spread[b]; });
  }

  std::vector<std::uint32_t> assign(n, 0), prev;
  std::vector<double> dist(n, 0.0);
  std::vector<double> sums(static_cast<std::size_t>(K) * sd);
  std::vector<std::size_t> counts(K);
  std::vector<double> history;

  for (std::uint32_t it = 0; it < max_iters; ++it) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest_centroid(cb, sub, slice(i), &dist[i]);
      err += dist[i];
    }
    history.push_back(err);
    if (assign == prev) break;
    prev = assign;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = slice(i);
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * sd;
      for (std::uint32_t c = 0; c < sd; ++c) s[c] += x[c];
      ++counts[assign[i]];
    }
    std::size_t spread_pos = 0;
    for (std::uint32_t k = 0; k < K; ++k) {
      auto cent = cb.centroid(sub, k);
      if (counts[k] > 0) {
        const double* s = sums.data() + static_cast<std::size_t>(k) * sd;
        for (std::uint32_t c = 0; c < sd; ++c) cent[c] = static_cast<float>(s[c] / static_cast<double>(counts[k]));
        continue;
      }
      // Empty cluster: move it onto the point farthest from the subspace mean
      // that is not already represented exactly.
      while (spread_pos < n && dist[by_spread[spread_pos]] == 0.0) ++spread_pos;
      if (spread_pos < n) {
        const std::size_t i = by_spread[spread_pos++];
        set_centroid(k, slice(i));
        dist[i] = 0.0;
      }
    }
  }
  return history;
}

}  // namespace detail

// Trains one k-means codebook per subspace. Deterministic for a fixed seed.
inline Codebook pq_train(const MatrixView& vectors, const PqTrainOptions& opt, PqTrainTrace* trace = nullptr) {
  if (opt.m == 0 || opt.K == 0 || opt.max_iters == 0)
    throw InvalidArgument("pq_train: m, K and max_iters must be positive");
  if (!std::has_single_bit(opt.K)) throw InvalidArgument("pq_train: K must be a power of two");
  if (vectors.cols == 0 || vectors.cols % opt.m != 0)
    throw InvalidArgument("pq_train: m = " + std::to_string(opt.m) + " does not divide d = " +
                          std::to_string(vectors.cols));
  if (vectors.rows < opt.K)
    throw InvalidArgument("pq_train: need at least K = " + std::to_string(opt.K) + " vectors, got " +
                          std::to_string(vectors.rows));

  Codebook cb;
  cb.m = opt.m;
  cb.K = opt.K;
  cb.sub_dim = static_cast<std::uint32_t>(vectors.cols / opt.m);
  cb.seed = opt.seed;
  cb.trained_on = vectors.rows;
  cb.centroids.assign(static_cast<std::size_t>(cb.m) * cb.K * cb.sub_dim, 0.0f);
  if (trace) {
    trace->errors.clear();
    trace->iterations.clear();
  }
  for (std::uint32_t j = 0; j < cb.m; ++j) {
    auto hist = detail::train_subspace(vectors, cb, j, opt.max_iters);
    if (trace) {
      trace->iterations.push_back(static_cast<std::uint32_t>(hist.size()));
      trace->errors.push_back(std::move(hist));
    }
  }
  return cb;
}

inline PqCodes pq_encode(const MatrixView& vectors, const Codebook& cb) {
  if (vectors.cols != cb.dim())
    throw DimensionError("pq_encode: vector length " + std::to_string(vectors.cols) + " != codebook d " +
                         std::to_string(cb.dim()));
  PqCodes out;
  out.n = static_cast<std::uint32_t>(vectors.rows);
  out.m = cb.m;
  out.K = cb.K;
  out.codes.resize(static_cast<std::size_t>(out.n) * cb.m);
  for (std::size_t i = 0; i < vectors.rows; ++i) {
    auto v = vectors.row(i);
    for (std::uint32_t j = 0; j < cb.m; ++j)
      out.codes[i * cb.m + j] = detail::nearest_centroid(cb, j, v.subspan(std::size_t{j} * cb.sub_dim, cb.sub_dim));
  }
  return out;
}

inline FloatMatrix pq_decode(const PqCodes& codes, const Codebook& cb) {
  if (codes.m != cb.m || codes.K != cb.K) throw DimensionError("pq_decode: codes do not match the codebook shape");
  if (codes.codes.size() != static_cast<std::size_t>(codes.n) * codes.m)
    throw DimensionError("pq_decode: code array size mismatch");
  FloatMatrix out(codes.n, cb.dim());
  for (std::size_t i = 0; i < codes.n; ++i) {
    auto dst = out.row(i);
    for (std::uint32_t j = 0; j < cb.m; ++j) {
      const auto k = codes.at(i, j);
      if (k >= cb.K)
        throw InvalidArgument("pq_decode: code " + std::to_string(k) + " out of range for K = " + std::to_string(cb.K));
      auto c = cb.centroid(j, k);
      std::copy(c.begin(), c.end(), dst.begin() + std::size_t{j} * cb.sub_dim);
    }
  }
  return out;
}

// MSB-first bit packing of log2(K)-bit codes into one continuous stream.
inline Bytes pack_codes(const PqCodes& codes) {
  const int bits = std::countr_zero(codes.K);
  Bytes out(codes.packed_bytes(), 0);
  std::uint64_t pos = 0;
  for (auto code : codes.codes) {
    if (code >= codes.K) throw InvalidArgument("pack_codes: code out of range");
    for (int b = bits - 1; b >= 0; --b, ++pos)
      if ((code >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
  }
  return out;
}

inline std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> packed, std::size_t count, std::uint32_t K) {
  const int bits = std::countr_zero(K);
  if (packed.size() != (static_cast<std::uint64_t>(count) * bits + 7) / 8)
    throw FormatError(FormatError::Kind::size_mismatch, "unpack_codes: packed length disagrees with code count");
  std::vector<std::uint32_t> codes(count, 0);
  std::uint64_t pos = 0;
  for (auto& code : codes)
    for (int b = 0; b < bits; ++b, ++pos)
      code = (code << 1) | ((packed[pos / 8] >> (7 - pos % 8)) & 1u);
  return codes;
}

inline Bytes write_codebook(const Codebook& cb) {
  cb.validate();
  if (cb.m > 0xFFFF || cb.sub_dim > 0xFFFF) throw InvalidArgument("write_codebook: m or sub_dim exceeds u16");
  ByteWriter w(23 + cb.centroids.size() * 4);
  w.magic("VPQC");
  w.u8(Codebook::kVersion);
  w.u16(static_cast<std::uint16_t>(cb.m));
  w.u32(cb.K);
  w.u16(static_cast<std::uint16_t>(cb.sub_dim));
  w.u64(cb.seed);
  w.f32s(cb.centroids);
  return std::move(w).take();
}

inline Codebook read_codebook(std::span<const std::uint8_t> data) {
  ByteReader r(data, "codebook");
  r.expect_magic("VPQC");
  const auto version = r.u8();
  if (version != Codebook::kVersion)
    throw FormatError(FormatError::Kind::unsupported_version, "codebook: unsupported version " + std::to_string(version));
  Codebook cb;
  cb.m = r.u16();
  cb.K = r.u32();
  cb.sub_dim = r.u16();
  cb.seed = r.u64();
  if (cb.m == 0 || cb.K == 0 || cb.sub_dim == 0 || !std::has_single_bit(cb.K))
    throw FormatError(FormatError::Kind::invalid_value, "codebook: invalid shape");
  const std::size_t count = static_cast<std::size_t>(cb.m) * cb.K * cb.sub_dim;
  if (r.remaining() < count * 4)
    throw FormatError(FormatError::Kind::truncated, "codebook: truncated centroid block");
  if (r.remaining() > count * 4)
    throw FormatError(FormatError::Kind::size_mismatch, "codebook: trailing bytes after centroids");
  cb.centroids.resize(count);
  r.f32s(cb.centroids);
  return cb;
}

// Placement of coded vectors on the patch grid. Empty coords means a full
// grid in row-major order.
struct PqLayout {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<GridCoord> coords;
};

// meta: rows u16, cols u16, n u32, m u16, K u32, flags u8,
//       [n x (row u16, col u16) if flags & 1], [codebook file bytes if flags & 2]
// body: packed codes only.
inline Payload pq_payload(const PqCodes& codes, bool include_codebook, const Codebook* cb = nullptr,
                          const PqLayout& layout = {}) {
  if (include_codebook && !cb) throw InvalidArgument("pq_payload: codebook requested but not supplied");
  if (!layout.coords.empty() && layout.coords.size() != codes.n)
    throw DimensionError("pq_payload: coordinate count differs from code count");
  Payload p;
  p.kind = PayloadKind::pq_codes;
  ByteWriter m;
  m.u16(detail::checked_u16(layout.rows, "grid rows"));
  m.u16(detail::checked_u16(layout.cols, "grid cols"));
  m.u32(codes.n);
  m.u16(detail::checked_u16(codes.m, "m"));
  m.u32(codes.K);
  m.u8(static_cast<std::uint8_t>((layout.coords.empty() ? 0 : 1) | (include_codebook ? 2 : 0)));
  for (auto c : layout.coords) {
    m.u16(static_cast<std::uint16_t>(c.row));
    m.u16(static_cast<std::uint16_t>(c.col));
  }
  if (include_codebook) m.raw(write_codebook(*cb));
  p.meta = std::move(m).take();
  p.body = pack_codes(codes);
  return p;
}

struct PqPayloadContents {
  PqCodes codes;
  PqLayout layout;
  std::optional<Codebook> codebook;
};

inline PqPayloadContents parse_pq_payload(const Payload& p) {
  detail::expect_kind(p, PayloadKind::pq_codes, "parse_pq_payload");
  ByteReader m(p.meta, "pq_codes meta");
  PqPayloadContents out;
  out.layout.rows = m.u16();
  out.layout.cols = m.u16();
  out.codes.n = m.u32();
  out.codes.m = m.u16();
  out.codes.K = m.u32();
  if (out.codes.m == 0 || out.codes.K == 0 || !std::has_single_bit(out.codes.K))
    throw FormatError(FormatError::Kind::invalid_value, "pq_codes: invalid m or K");
  const auto flags = m.u8();
  if (flags & 1) {
    out.layout.coords.resize(out.codes.n);
    for (auto& c : out.layout.coords) c = {m.u16(), m.u16()};
  }
  if (flags & 2) out.codebook = read_codebook(m.raw(m.remaining()));
  detail::expect_consumed(m);
  out.codes.codes = unpack_codes(p.body, std::size_t{out.codes.n} * out.codes.m, out.codes.K);
  return out;
}

}  // namespace vad
