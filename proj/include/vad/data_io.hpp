#pragma once

// Dataset ingestion and the binary interchange formats.
//
// FeatureFile (one per image, little-endian):
//   "VFTR" | version u8 | id_len u16 + id | category_len u16 + category |
//   label u8 (0 normal, 1 anomalous) | layer_count u8 |
//   per layer {index u8, C u16, H u16, W u16} |
//   mask_ref_len u16 + mask path (may be empty) |
//   per layer f32 data, channel-major, in declared order
//
// Raw image dump ("VIMG"): version u8 | H u16 | W u16 | C u8 | H*W*C bytes (HWC).
//
// A prepared dataset directory carries index.json listing, per category,
// the train and test entries with relative paths to their files.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vad/byte_io.hpp"
#include "vad/core_model.hpp"
#include "vad/errors.hpp"
#include "vad/metrics.hpp"

namespace vad {

namespace fs = std::filesystem;

inline Bytes read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// FeatureFile

struct FeatureFile {
  static constexpr std::uint8_t kVersion = 1;

  FeatureStack stack;
  std::string mask_ref;
};

inline Bytes write_feature_file(const FeatureFile& f) {
  const auto& s = f.stack;
  s.validate();
  if (s.layers.size() > 255) throw InvalidArgument("write_feature_file: more than 255 layers");
  ByteWriter w(64 + s.total_values() * 4);
  w.magic("VFTR");
  w.u8(FeatureFile::kVersion);
  w.str16(s.image_id);
  w.str16(s.category);
  w.u8(static_cast<std::uint8_t>(s.label));
  w.u8(static_cast<std::uint8_t>(s.layers.size()));
  for (const auto& l : s.layers) {
    if (l.layer() > 255 || l.channels() > 0xFFFF || l.height() > 0xFFFF || l.width() > 0xFFFF)
      throw InvalidArgument("write_feature_file: layer header field out of range");
    w.u8(static_cast<std::uint8_t>(l.layer()));
    w.u16(static_cast<std::uint16_t>(l.channels()));
    w.u16(static_cast<std::uint16_t>(l.height()));
    w.u16(static_cast<std::uint16_t>(l.width()));
  }
  w.str16(f.mask_ref);
  for (const auto& l : s.layers) w.f32s(l.values());
  return std::move(w).take();
}

inline FeatureFile read_feature_file(std::span<const std::uint8_t> data, const std::string& context = "feature file") {
  ByteReader r(data, context);
  r.expect_magic("VFTR");
  const auto version = r.u8();
  if (version != FeatureFile::kVersion)
    throw FormatError(FormatError::Kind::unsupported_version,
                      context + ": unsupported version " + std::to_string(version));
  FeatureFile f;
  f.stack.image_id = r.str16();
  f.stack.category = r.str16();
  const auto label = r.u8();
  if (label > 1) throw FormatError(FormatError::Kind::invalid_value, context + ": label must be 0 or 1");
  f.stack.label = static_cast<Label>(label);
  const int count = r.u8();
  struct Dims {
    int idx, c, h, w;
  };
  std::vector<Dims> dims(count);
  std::size_t expected = 0;
  for (auto& d : dims) {
    d = {r.u8(), r.u16(), r.u16(), r.u16()};
    if (d.idx == 0 || d.c == 0 || d.h == 0 || d.w == 0)
      throw FormatError(FormatError::Kind::invalid_value, context + ": zero field in layer header");
    expected += static_cast<std::size_t>(d.c) * d.h * d.w * 4;
  }
  f.mask_ref = r.str16();
  if (r.remaining() < expected)
    throw FormatError(FormatError::Kind::truncated, context + ": truncated layer data (need " +
                                                        std::to_string(expected) + " bytes, have " +
                                                        std::to_string(r.remaining()) + ")");
  if (r.remaining() > expected)
    throw FormatError(FormatError::Kind::size_mismatch,
                      context + ": " + std::to_string(r.remaining() - expected) + " bytes beyond declared layer sizes");
  for (const auto& d : dims) {
    std::vector<float> v(static_cast<std::size_t>(d.c) * d.h * d.w);
    r.f32s(v);
    try {
      f.stack.layers.emplace_back(d.idx, d.c, d.h, d.w, std::move(v));
    } catch (const InvalidArgument& e) {
      throw FormatError(FormatError::Kind::invalid_value, context + ": " + e.what());
    }
  }
  try {
    f.stack.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::invalid_value, context + ": " + e.what());
  }
  return f;
}

inline FeatureFile load_feature_file(const fs::path& path) {
  return read_feature_file(read_file_bytes(path), path.string());
}

inline void save_feature_file(const fs::path& path, const FeatureFile& f) { write_file_bytes(path, write_feature_file(f)); }

// ---------------------------------------------------------------------------
// Raw image dumps

inline Bytes write_raw_image(const Image8& img) {
  ByteWriter w(10 + img.data.size());
  w.magic("VIMG");
  w.u8(1);
  w.u16(static_cast<std::uint16_t>(img.height));
  w.u16(static_cast<std::uint16_t>(img.width));
  w.u8(static_cast<std::uint8_t>(img.channels));
  w.raw(img.data);
  return std::move(w).take();
}

inline Image8 read_raw_image(std::span<const std::uint8_t> data, const std::string& context = "raw image") {
  ByteReader r(data, context);
  r.expect_magic("VIMG");
  const auto version = r.u8();
  if (version != 1)
    throw FormatError(FormatError::Kind::unsupported_version, context + ": unsupported version " + std::to_string(version));
  const int h = r.u16(), w = r.u16(), c = r.u8();
  if (h == 0 || w == 0 || c == 0) throw FormatError(FormatError::Kind::invalid_value, context + ": zero dimension");
  Image8 img(h, w, c);
  const std::size_t n = img.data.size();
  if (r.remaining() < n) throw FormatError(FormatError::Kind::truncated, context + ": truncated pixel data");
  if (r.remaining() > n) throw FormatError(FormatError::Kind::size_mismatch, context + ": trailing bytes");
  auto px = r.raw(n);
  std::copy(px.begin(), px.end(), img.data.begin());
  return img;
}

inline Image8 load_raw_image(const fs::path& path) { return read_raw_image(read_file_bytes(path), path.string()); }

// ---------------------------------------------------------------------------
// MVTec-style directory layout

struct DatasetEntry {
  fs::path image;
  Label label = Label::normal;
  std::string defect;  // "good" for normal test images
  std::optional<fs::path> mask;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct CategoryIndex {
  std::string name;
  std::vector<DatasetEntry> train;
  std::vector<DatasetEntry> test;

  friend bool operator==(const CategoryIndex&, const CategoryIndex&) = default;
};

struct DatasetIndex {
  fs::path root;
  std::vector<CategoryIndex> categories;  // sorted by name
  std::vector<std::string> warnings;
};

namespace detail {

inline bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff" ||
         ext == ".vimg";
}

inline std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Builds the index from <category>/train/good, <category>/test/<defect> and
// <category>/ground_truth/<defect>/<stem>_mask.<ext>. Unknown files are
// skipped and reported in `warnings`; entries are sorted so enumeration
// order never matters.
inline DatasetIndex scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw InvalidArgument("scan_dataset: dataset root " + root.string() + " does not exist");
  DatasetIndex idx;
  idx.root = root;
  std::vector<std::string> missing_train;
  for (const auto& cat_dir : detail::sorted_children(root)) {
    if (!fs::is_directory(cat_dir)) {
      idx.warnings.push_back("ignoring file " + cat_dir.string());
      continue;
    }
    CategoryIndex cat;
    cat.name = cat_dir.filename().string();
    const auto train_dir = cat_dir / "train";
    const auto test_dir = cat_dir / "test";
    const auto gt_dir = cat_dir / "ground_truth";
    if (!fs::is_directory(test_dir) && !fs::is_directory(train_dir)) {
      idx.warnings.push_back("ignoring directory without train/test splits: " + cat_dir.string());
      continue;
    }
    if (!fs::is_directory(train_dir / "good")) {
      missing_train.push_back(cat.name);
      continue;
    }
    for (const auto& sub : detail::sorted_children(train_dir)) {
      if (!fs::is_directory(sub)) {
        idx.warnings.push_back("ignoring file " + sub.string());
        continue;
      }
      if (sub.filename() != "good")
        throw InvalidArgument("scan_dataset: train split of " + cat.name + " contains defect directory " +
                              sub.filename().string());
    }
    for (const auto& f : detail::sorted_children(train_dir / "good")) {
      if (fs::is_regular_file(f) && detail::is_image_file(f))
        cat.train.push_back({f, Label::normal, "good", std::nullopt});
      else
        idx.warnings.push_back("ignoring " + f.string());
    }
    if (fs::is_directory(test_dir)) {
      for (const auto& defect_dir : detail::sorted_children(test_dir)) {
        if (!fs::is_directory(defect_dir)) {
          idx.warnings.push_back("ignoring file " + defect_dir.string());
          continue;
        }
        const auto defect = defect_dir.filename().string();
        for (const auto& f : detail::sorted_children(defect_dir)) {
          if (!fs::is_regular_file(f) || !detail::is_image_file(f)) {
            idx.warnings.push_back("ignoring " + f.string());
            continue;
          }
          DatasetEntry e{f, defect == "good" ? Label::normal : Label::anomalous, defect, std::nullopt};
          if (e.label == Label::anomalous) {
            const auto stem = f.stem().string();
            std::optional<fs::path> mask;
            if (fs::is_directory(gt_dir / defect))
              for (const auto& m : detail::sorted_children(gt_dir / defect))
                if (m.stem().string() == stem + "_mask" || m.stem().string() == stem) {
                  mask = m;
                  break;
                }
            if (!mask)
              throw InvalidArgument("scan_dataset: no ground-truth mask for anomalous image " + f.string());
            e.mask = *mask;
          }
          cat.test.push_back(std::move(e));
        }
      }
    }
    idx.categories.push_back(std::move(cat));
  }
  if (!missing_train.empty()) {
    std::string list;
    for (const auto& m : missing_train) list += (list.empty() ? "" : ", ") + m;
    throw InvalidArgument("scan_dataset: categories without train/good split: " + list);
  }
  if (idx.categories.empty()) throw InvalidArgument("scan_dataset: no categories under " + root.string());
  return idx;
}

// ---------------------------------------------------------------------------
// Prepared dataset (feature files + raw image dumps + index.json)

struct PreparedEntry {
  std::string id;
  Label label = Label::normal;
  std::string features;  // relative path to a FeatureFile, may be empty
  std::string image;     // relative path to a VIMG dump, may be empty
  std::string mask;      // relative path to a 1-channel VIMG dump, may be empty
};

struct PreparedCategory {
  std::string name;
  CategoryKind kind = CategoryKind::object;
  std::vector<PreparedEntry> train;
  std::vector<PreparedEntry> test;
};

struct PreparedIndex {
  std::vector<PreparedCategory> categories;
};

inline nlohmann::ordered_json to_json(const PreparedIndex& idx) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["version"] = 1;
  j["categories"] = ordered_json::array();
  for (const auto& c : idx.categories) {
    ordered_json cj;
    cj["name"] = c.name;
    cj["kind"] = to_string(c.kind);
    auto entries = [](const std::vector<PreparedEntry>& es) {
      ordered_json arr = ordered_json::array();
      for (const auto& e : es) {
        ordered_json ej;
        ej["id"] = e.id;
        ej["label"] = to_string(e.label);
        if (!e.features.empty()) ej["features"] = e.features;
        if (!e.image.empty()) ej["image"] = e.image;
        if (!e.mask.empty()) ej["mask"] = e.mask;
        arr.push_back(std::move(ej));
      }
      return arr;
    };
    cj["train"] = entries(c.train);
    cj["test"] = entries(c.test);
    j["categories"].push_back(std::move(cj));
  }
  return j;
}

inline PreparedIndex prepared_index_from_json(const nlohmann::json& j) {
  PreparedIndex idx;
  try {
    if (j.at("version").get<int>() != 1) throw ConfigError("index.json: unsupported version");
    for (const auto& cj : j.at("categories")) {
      PreparedCategory c;
      c.name = cj.at("name").get<std::string>();
      const auto kind = cj.value("kind", std::string("object"));
      if (kind != "object" && kind != "texture") throw ConfigError("index.json: unknown category kind " + kind);
      c.kind = kind == "object" ? CategoryKind::object : CategoryKind::texture;
      auto entries = [](const nlohmann::json& arr, std::vector<PreparedEntry>& out) {
        for (const auto& ej : arr) {
          PreparedEntry e;
          e.id = ej.at("id").get<std::string>();
          const auto label = ej.value("label", std::string("normal"));
          if (label != "normal" && label != "anomalous") throw ConfigError("index.json: unknown label " + label);
          e.label = label == "normal" ? Label::normal : Label::anomalous;
          e.features = ej.value("features", std::string());
          e.image = ej.value("image", std::string());
          e.mask = ej.value("mask", std::string());
          out.push_back(std::move(e));
        }
      };
      entries(cj.at("train"), c.train);
      entries(cj.at("test"), c.test);
      for (const auto& e : c.train)
        if (e.label != Label::normal) throw ConfigError("index.json: anomalous entry in train split of " + c.name);
      idx.categories.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("index.json: ") + e.what());
  }
  return idx;
}

inline PreparedIndex load_prepared_index(const fs::path& root) {
  const auto path = root / "index.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("missing dataset index " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return prepared_index_from_json(j);
}

}  // namespace vad
