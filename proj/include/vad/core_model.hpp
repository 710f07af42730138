#pragma once

// Images, per-layer feature tensors and the patch grid built from them.
//
// A FeatureTensor is stored channel-major: values[(c * H + y) * W + x].
// A PatchGrid keeps its patch vectors in one contiguous n x d block with a
// parallel list of grid coordinates; a full grid is in row-major order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vad/errors.hpp"

namespace vad {

enum class Label : std::uint8_t { normal = 0, anomalous = 1 };

inline const char* to_string(Label l) { return l == Label::normal ? "normal" : "anomalous"; }

// 8-bit raster, interleaved (HWC). Masks use channels == 1 with values 0/1.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || c <= 0) throw InvalidArgument("Image8: dimensions must be positive");
  }

  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }

  std::uint8_t& at(int y, int x, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool any_nonzero() const {
    return std::any_of(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; });
  }

  friend bool operator==(const Image8&, const Image8&) = default;
};

struct ImageSample {
  std::string id;
  Image8 pixels;
  Label label = Label::normal;
  std::optional<Image8> mask;
  std::string category;

  void validate() const {
    if (pixels.channels != 3) throw InvalidArgument("ImageSample " + id + ": pixels must have 3 channels");
    if (mask) {
      if (mask->height != pixels.height || mask->width != pixels.width || mask->channels != 1)
        throw DimensionError("ImageSample " + id + ": mask dims differ from pixel dims");
      if (label == Label::normal && mask->any_nonzero())
        throw InvalidArgument("ImageSample " + id + ": normal sample with non-empty mask");
    }
  }
};

class FeatureTensor {
 public:
  FeatureTensor() = default;

  FeatureTensor(int layer, int channels, int height, int width, std::vector<float> values)
      : layer_(layer), channels_(channels), height_(height), width_(width), values_(std::move(values)) {
    if (layer <= 0 || channels <= 0 || height <= 0 || width <= 0)
      throw InvalidArgument("FeatureTensor: layer index and dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(channels) * height * width)
      throw DimensionError("FeatureTensor: values length " + std::to_string(values_.size()) + " != C*H*W = " +
                           std::to_string(static_cast<std::size_t>(channels) * height * width));
    for (float v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("FeatureTensor: non-finite value");
  }

  FeatureTensor(int layer, int channels, int height, int width)
      : FeatureTensor(layer, channels, height, width,
                      std::vector<float>(static_cast<std::size_t>(channels) * height * width, 0.0f)) {}

  int layer() const noexcept { return layer_; }
  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  float at(int c, int y, int x) const { return values_[index(c, y, x)]; }
  float& at(int c, int y, int x) { return values_[index(c, y, x)]; }

  std::span<const float> values() const noexcept { return values_; }
  std::span<float> values() noexcept { return values_; }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int layer_ = 0;
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

struct FeatureStack {
  std::string image_id;
  std::vector<FeatureTensor> layers;
  Label label = Label::normal;
  std::optional<Image8> mask;
  std::string category;

  void validate() const {
    if (layers.empty()) throw InvalidArgument("FeatureStack " + image_id + ": no layers");
    for (std::size_t i = 1; i < layers.size(); ++i)
      if (layers[i].layer() <= layers[i - 1].layer())
        throw InvalidArgument("FeatureStack " + image_id + ": layer indices must be strictly increasing");
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }

  friend bool operator==(const FeatureStack&, const FeatureStack&) = default;
};

// Read-only row-major view over an n x d block of floats.
struct MatrixView {
  const float* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(const float* p, std::size_t r, std::size_t c) : data(p), rows(r), cols(c) {}
  MatrixView(std::span<const float> flat, std::size_t c) : data(flat.data()), rows(c ? flat.size() / c : 0), cols(c) {
    if (c == 0 || flat.size() % c != 0) throw DimensionError("MatrixView: length is not a multiple of the row width");
  }

  std::span<const float> row(std::size_t i) const { return {data + i * cols, cols}; }
  bool empty() const noexcept { return rows == 0; }
};

// Owning n x d matrix.
struct FloatMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  FloatMatrix() = default;
  FloatMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  MatrixView view() const { return {data.data(), rows, cols}; }

  friend bool operator==(const FloatMatrix&, const FloatMatrix&) = default;
};

struct GridCoord {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
  friend auto operator<=>(const GridCoord&, const GridCoord&) = default;
};

// One concatenated feature vector with its grid location (an owning copy).
struct PatchFeature {
  std::vector<float> vector;
  std::uint32_t grid_row = 0;
  std::uint32_t grid_col = 0;
};

// Patch vectors on a rows x cols grid. A full grid holds every cell in
// row-major order; a partial grid (e.g. after random sampling) holds a
// subset with unique coordinates.
class PatchGrid {
 public:
  PatchGrid() = default;
  PatchGrid(std::uint32_t rows, std::uint32_t cols, std::uint32_t d) : rows_(rows), cols_(cols), d_(d) {
    if (rows == 0 || cols == 0 || d == 0) throw InvalidArgument("PatchGrid: rows, cols and d must be positive");
  }

  std::uint32_t rows() const noexcept { return rows_; }
  std::uint32_t cols() const noexcept { return cols_; }
  std::uint32_t dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return coords_.size(); }
  bool empty() const noexcept { return coords_.empty(); }
  std::size_t cell_count() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }

  // True when every cell is present in row-major order.
  bool full() const {
    if (size() != cell_count()) return false;
    for (std::size_t i = 0; i < coords_.size(); ++i)
      if (coords_[i].row != i / cols_ || coords_[i].col != i % cols_) return false;
    return true;
  }

  std::span<const float> vector(std::size_t i) const { return {values_.data() + i * d_, d_}; }
  std::span<float> vector(std::size_t i) { return {values_.data() + i * d_, d_}; }
  GridCoord coord(std::size_t i) const { return coords_[i]; }

  PatchFeature patch(std::size_t i) const {
    auto v = vector(i);
    return {std::vector<float>(v.begin(), v.end()), coords_[i].row, coords_[i].col};
  }

  std::span<const GridCoord> coords() const noexcept { return coords_; }
  MatrixView matrix() const noexcept { return {values_.data(), coords_.size(), d_}; }
  std::span<const float> values() const noexcept { return values_; }

  // Appends a patch; returns a writable view of its vector.
  std::span<float> append(GridCoord at) {
    if (at.row >= rows_ || at.col >= cols_) throw InvalidArgument("PatchGrid: coordinate out of bounds");
    coords_.push_back(at);
    values_.resize(values_.size() + d_, 0.0f);
    return vector(coords_.size() - 1);
  }

  void append(GridCoord at, std::span<const float> v) {
    if (v.size() != d_) throw DimensionError("PatchGrid: patch length differs from d");
    auto dst = append(at);
    std::copy(v.begin(), v.end(), dst.begin());
  }

  void reserve(std::size_t n) {
    coords_.reserve(n);
    values_.reserve(n * d_);
  }

  // Checks coordinate uniqueness, bounds and finiteness.
  void validate() const {
    if (values_.size() != coords_.size() * d_) throw DimensionError("PatchGrid: value block size mismatch");
    if (coords_.size() > cell_count()) throw InvalidArgument("PatchGrid: more patches than cells");
    std::vector<std::uint8_t> seen(cell_count(), 0);
    for (auto c : coords_) {
      if (c.row >= rows_ || c.col >= cols_) throw InvalidArgument("PatchGrid: coordinate out of bounds");
      auto& s = seen[static_cast<std::size_t>(c.row) * cols_ + c.col];
      if (s) throw InvalidArgument("PatchGrid: duplicate coordinate");
      s = 1;
    }
    for (float v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("PatchGrid: non-finite value");
  }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;

 private:
  std::uint32_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::uint32_t d_ = 0;
  std::vector<GridCoord> coords_;
  std::vector<float> values_;
};

// ceil(ratio * n) for ratio in (0, 1]. A relative slack of 1e-9 absorbs
// representation error such as 0.1 * 1000 landing a hair above 100.
inline std::size_t ratio_count(double ratio, std::size_t n) {
  if (!(ratio > 0.0) || ratio > 1.0) throw InvalidArgument("ratio must lie in (0, 1]");
  const double x = ratio * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::min(k, n);
}

// Random-sampled subset of a full grid; same representation, partial coverage.
using SampledPatchSet = PatchGrid;

// Concatenates every layer's channel vector at each location of the largest
// layer's grid. Smaller (deeper) layers are nearest-neighbour replicated,
// which requires their sides to divide the target sides exactly.
inline PatchGrid build_patch_grid(const FeatureStack& stack) {
  stack.validate();
  int rows = 0, cols = 0;
  std::uint32_t d = 0;
  for (const auto& l : stack.layers) {
    rows = std::max(rows, l.height());
    cols = std::max(cols, l.width());
    d += static_cast<std::uint32_t>(l.channels());
  }
  for (const auto& l : stack.layers) {
    if (rows % l.height() != 0 || cols % l.width() != 0)
      throw AlignmentError("build_patch_grid: layer " + std::to_string(l.layer()) + " (" + std::to_string(l.height()) +
                           "x" + std::to_string(l.width()) + ") does not divide the " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " grid");
  }

  PatchGrid grid(static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols), d);
  grid.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto out = grid.append({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
      std::size_t k = 0;
      for (const auto& l : stack.layers) {
        const int sy = r / (rows / l.height());
        const int sx = c / (cols / l.width());
        for (int ch = 0; ch < l.channels(); ++ch) out[k++] = l.at(ch, sy, sx);
      }
    }
  }
  return grid;
}

// Whole-image embedding: every layer flattened channel-major, in layer order.
inline std::vector<float> flatten_embedding(const FeatureStack& stack) {
  if (stack.layers.empty()) throw InvalidArgument("flatten_embedding: empty stack");
  std::vector<float> v;
  v.reserve(stack.total_values());
  for (const auto& l : stack.layers) v.insert(v.end(), l.values().begin(), l.values().end());
  return v;
}

}  // namespace vad
