#pragma once

// Float image buffers plus 8-bit PNG and PFM encoding.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsnerf {

// Row-major interleaved float image.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> values;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c = 0) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  void clamp01() {
    for (auto& v : values) v = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
  }

  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

struct PngReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->data + cur->offset, length);
  cur->offset += length;
}

inline std::uint8_t to_byte(float v) {
  if (!std::isfinite(v)) v = 0.0f;
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace detail

// Encodes a 1- or 3-channel image as 8-bit PNG. Output is a pure function of the pixels.
inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) throw ImageFormatError("PNG encode supports 1 or 3 channels");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageFormatError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageFormatError("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(img.width) * img.height * img.channels);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = detail::to_byte(img.values[i]);
  std::vector<png_bytep> row_ptrs(img.height);
  for (int y = 0; y < img.height; ++y) {
    row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * img.width * img.channels;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageFormatError("PNG encode failed");
  }
  png_set_write_fn(png, &out, detail::png_write_to_vector, detail::png_flush_noop);
  png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

// Decodes an 8-bit PNG into a float RGB image in [0, 1].
inline ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw ImageFormatError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageFormatError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageFormatError("png_create_info_struct failed");
  }
  detail::PngReadCursor cursor{bytes.data(), bytes.size(), 0};
  ImageBuffer img;
  std::vector<std::uint8_t> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageFormatError("PNG decode failed");
  }
  png_set_read_fn(png, &cursor, detail::png_read_from_memory);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * h);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = raw.data() + rowbytes * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = ImageBuffer(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = raw[rowbytes * y + 3 * x + c] / 255.0f;
    }
  }
  return img;
}

// PFM: "PF"/"Pf" header, little-endian (negative scale), rows stored bottom-to-top.
inline std::vector<std::uint8_t> encode_pfm(const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) throw ImageFormatError("PFM supports 1 or 3 channels");
  std::ostringstream header;
  header << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  const std::size_t row_floats = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y) {
    const auto* src = reinterpret_cast<const std::uint8_t*>(img.values.data() + row_floats * y);
    out.insert(out.end(), src, src + row_floats * sizeof(float));
  }
  return out;
}

inline ImageBuffer decode_pfm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  if (magic != "PF" && magic != "Pf") throw ImageFormatError("not a PFM stream");
  const int channels = magic == "PF" ? 3 : 1;
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const double scale = std::stod(token());
  ++pos;  // single whitespace byte before the raster
  if (scale > 0) throw ImageFormatError("big-endian PFM is not supported");
  ImageBuffer img(w, h, channels);
  const std::size_t row_floats = static_cast<std::size_t>(w) * channels;
  if (bytes.size() < pos + row_floats * h * sizeof(float)) throw ImageFormatError("truncated PFM raster");
  for (int y = h - 1; y >= 0; --y) {
    std::memcpy(img.values.data() + row_floats * y, bytes.data() + pos, row_floats * sizeof(float));
    pos += row_floats * sizeof(float);
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }
inline void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  write_file_bytes(path, encode_png(img));
}
inline ImageBuffer read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file_bytes(path)); }
inline void write_pfm(const std::filesystem::path& path, const ImageBuffer& img) {
  write_file_bytes(path, encode_pfm(img));
}

// Depth preview: linear ramp between near and far, invalid (<= 0 or non-finite) pixels black.
inline ImageBuffer colorize_depth(const ImageBuffer& depth, double near, double far) {
  ImageBuffer out(depth.width, depth.height, 3);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const float d = depth.at(x, y, 0);
      if (!std::isfinite(d) || d <= 0.0f) continue;
      const float s = static_cast<float>(std::clamp((d - near) / (far - near), 0.0, 1.0));
      out.at(x, y, 0) = 1.0f - s;
      out.at(x, y, 1) = 0.5f * (1.0f - std::abs(2.0f * s - 1.0f)) + 0.25f;
      out.at(x, y, 2) = s;
    }
  }
  return out;
}

}  // namespace dsnerf
