#pragma once

// Pluggable still-image codecs used for image transmission and for tiled
// feature planes. Two implementations ship:
//   DeflatePlaneCodec  lossless; left-neighbour delta filter + zlib deflate
//   JpegCodec          lossy adapter over libjpeg, quality passed through
// Other codecs (e.g. WebP) plug in through CodecRegistry::add.

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <zlib.h>

#include "vad/byte_io.hpp"
#include "vad/core_model.hpp"
#include "vad/errors.hpp"

namespace vad {

class ImageCodec {
 public:
  virtual ~ImageCodec() = default;

  virtual std::uint8_t id() const = 0;
  virtual std::string name() const = 0;
  virtual bool lossless() const = 0;
  // Codecs that are not safe for concurrent independent calls return false;
  // callers then serialize access.
  virtual bool thread_safe() const { return true; }

  virtual Bytes encode(const Image8& image, int quality) const = 0;
  virtual Image8 decode(std::span<const std::uint8_t> stream) const = 0;
};

class DeflatePlaneCodec final : public ImageCodec {
 public:
  static constexpr std::uint8_t kId = 1;

  std::uint8_t id() const override { return kId; }
  std::string name() const override { return "deflate"; }
  bool lossless() const override { return true; }

  // quality is accepted for interface parity; it maps onto the deflate level.
  Bytes encode(const Image8& image, int quality) const override {
    if (image.empty() || image.height > 0xFFFF || image.width > 0xFFFF || image.channels > 255)
      throw CodecError("deflate: unsupported image dimensions");
    const int stride = image.width * image.channels;
    std::vector<std::uint8_t> filtered(image.data.size());
    for (int y = 0; y < image.height; ++y) {
      const std::uint8_t* row = image.data.data() + static_cast<std::size_t>(y) * stride;
      std::uint8_t* out = filtered.data() + static_cast<std::size_t>(y) * stride;
      for (int i = 0; i < stride; ++i) {
        const std::uint8_t left = i >= image.channels ? row[i - image.channels] : 0;
        out[i] = static_cast<std::uint8_t>(row[i] - left);
      }
    }
    uLongf cap = compressBound(static_cast<uLong>(filtered.size()));
    std::vector<std::uint8_t> z(cap);
    const int level = std::clamp(quality / 11, 1, 9);
    if (compress2(z.data(), &cap, filtered.data(), static_cast<uLong>(filtered.size()), level) != Z_OK)
      throw CodecError("deflate: compression failed");
    z.resize(cap);

    ByteWriter w(z.size() + 9);
    w.u16(static_cast<std::uint16_t>(image.height));
    w.u16(static_cast<std::uint16_t>(image.width));
    w.u8(static_cast<std::uint8_t>(image.channels));
    w.u32(static_cast<std::uint32_t>(z.size()));
    w.raw(z);
    return std::move(w).take();
  }

  Image8 decode(std::span<const std::uint8_t> stream) const override {
    try {
      ByteReader r(stream, "deflate stream");
      const int h = r.u16();
      const int wd = r.u16();
      const int c = r.u8();
      const std::uint32_t zlen = r.u32();
      auto z = r.raw(zlen);
      if (h == 0 || wd == 0 || c == 0) throw CodecError("deflate: zero dimension in stream header");
      Image8 img(h, wd, c);
      uLongf out_len = static_cast<uLongf>(img.data.size());
      if (uncompress(img.data.data(), &out_len, z.data(), static_cast<uLong>(z.size())) != Z_OK ||
          out_len != img.data.size())
        throw CodecError("deflate: corrupt stream");
      const int stride = wd * c;
      for (int y = 0; y < h; ++y) {
        std::uint8_t* row = img.data.data() + static_cast<std::size_t>(y) * stride;
        for (int i = c; i < stride; ++i) row[i] = static_cast<std::uint8_t>(row[i] + row[i - c]);
      }
      return img;
    } catch (const FormatError& e) {
      throw CodecError(std::string("deflate: ") + e.what());
    }
  }
};

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

inline void jpeg_silent(j_common_ptr, int) {}

}  // namespace detail

class JpegCodec final : public ImageCodec {
 public:
  static constexpr std::uint8_t kId = 2;

  std::uint8_t id() const override { return kId; }
  std::string name() const override { return "jpeg"; }
  bool lossless() const override { return false; }

  Bytes encode(const Image8& image, int quality) const override {
    if (image.empty() || (image.channels != 1 && image.channels != 3))
      throw CodecError("jpeg: only 1- or 3-channel images are supported");
    Bytes out;
    std::string err;
    if (!compress(image, std::clamp(quality, 0, 100), out, err)) throw CodecError("jpeg: encode failed: " + err);
    return out;
  }

  Image8 decode(std::span<const std::uint8_t> stream) const override {
    Image8 img;
    std::string err;
    if (!decompress(stream, img, err)) throw CodecError("jpeg: decode failed: " + err);
    return img;
  }

 private:
  // The libjpeg calls live in functions whose locals are trivially
  // destructible so that longjmp out of the library is well defined.
  static bool compress(const Image8& image, int quality, Bytes& out, std::string& err) {
    jpeg_compress_struct cinfo;
    detail::JpegErrorManager jerr;
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = detail::jpeg_error_exit;
    if (setjmp(jerr.jump)) {
      jpeg_destroy_compress(&cinfo);
      std::free(buffer);
      err = jerr.message;
      return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = image.channels;
    cinfo.in_color_space = image.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = const_cast<JSAMPROW>(image.data.data() + cinfo.next_scanline * stride);
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    out.assign(buffer, buffer + size);
    std::free(buffer);
    return true;
  }

  static bool decompress(std::span<const std::uint8_t> stream, Image8& img, std::string& err) {
    if (stream.empty()) {
      err = "empty stream";
      return false;
    }
    jpeg_decompress_struct cinfo;
    detail::JpegErrorManager jerr;
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = detail::jpeg_error_exit;
    jerr.base.emit_message = detail::jpeg_silent;
    if (setjmp(jerr.jump)) {
      jpeg_destroy_decompress(&cinfo);
      err = jerr.message;
      return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, stream.data(), static_cast<unsigned long>(stream.size()));
    jpeg_read_header(&cinfo, TRUE);
    jpeg_start_decompress(&cinfo);
    img.height = static_cast<int>(cinfo.output_height);
    img.width = static_cast<int>(cinfo.output_width);
    img.channels = cinfo.output_components;
    img.data.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = img.data.data() + cinfo.output_scanline * stride;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    // A truncated stream decodes with a warning and grey fill; refuse it.
    const bool damaged = jerr.base.num_warnings > 0;
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    if (damaged) {
      err = "stream damaged or truncated";
      return false;
    }
    return true;
  }
};

// Process-wide codec table keyed by id and name.
class CodecRegistry {
 public:
  static CodecRegistry& instance() {
    static CodecRegistry registry;
    return registry;
  }

  void add(std::shared_ptr<const ImageCodec> codec) {
    std::lock_guard lock(mu_);
    for (auto& c : codecs_)
      if (c->id() == codec->id() || c->name() == codec->name()) {
        c = std::move(codec);
        return;
      }
    codecs_.push_back(std::move(codec));
  }

  std::shared_ptr<const ImageCodec> by_id(std::uint8_t id) const {
    std::lock_guard lock(mu_);
    for (const auto& c : codecs_)
      if (c->id() == id) return c;
    throw CodecError("no image codec registered with id " + std::to_string(id));
  }

  std::shared_ptr<const ImageCodec> by_name(const std::string& name) const {
    std::lock_guard lock(mu_);
    for (const auto& c : codecs_)
      if (c->name() == name) return c;
    throw CodecError("no image codec registered with name \"" + name + "\"");
  }

 private:
  CodecRegistry() {
    codecs_.push_back(std::make_shared<DeflatePlaneCodec>());
    codecs_.push_back(std::make_shared<JpegCodec>());
  }

  mutable std::mutex mu_;
  std::vector<std::shared_ptr<const ImageCodec>> codecs_;
};

}  // namespace vad
