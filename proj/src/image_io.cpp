#include "wormloc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "wormloc/error.hpp"

namespace wormloc::io {

namespace {

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->bytes->size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->bytes->data() + cur->pos, len);
  cur->pos += len;
}

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_cb(png_structp) {}

struct PngErrorSink {
  char message[256] = {};
};

void png_error_cb(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof sink->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

bool is_png(const std::vector<std::uint8_t>& b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

bool is_pgm(const std::vector<std::uint8_t>& b) { return b.size() >= 2 && b[0] == 'P' && b[1] == '5'; }

}  // namespace

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(Errc::io, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (!is_png(bytes)) fail(Errc::format, "not a PNG stream");
  PngErrorSink sink;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_cb, png_warning_cb);
  if (!png) fail(Errc::format, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadCursor cur{&bytes, 0};
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0;
  png_uint_32 h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::format, std::string("PNG: ") + sink.message);
  }
  png_set_read_fn(png, &cur, png_read_cb);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != w) png_error(png, "unsupported pixel layout");
  raw.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<float> data(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) data[i] = static_cast<float>(raw[i]) / 255.0f;
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  PngErrorSink sink;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_cb, png_warning_cb);
  if (!png) fail(Errc::format, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::format, std::string("PNG: ") + sink.message);
  }
  png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) row[x] = quantize(img.at(x, y));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
  if (!is_pgm(bytes)) fail(Errc::format, "not a binary PGM (P5) stream");
  std::size_t pos = 2;
  auto next_int = [&]() {
    // whitespace and '#' comments between header fields
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail(Errc::format, "malformed PGM header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 20) fail(Errc::format, "PGM header value too large");
      ++pos;
    }
    return static_cast<int>(v);
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) fail(Errc::format, "invalid PGM header values");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(Errc::format, "malformed PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < n * bpp) fail(Errc::format, "truncated PGM data");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned v = bpp == 1 ? bytes[pos + i] : (unsigned(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
    data[i] = std::min(1.0f, static_cast<float>(v) / static_cast<float>(maxval));
  }
  return GrayImage(w, h, std::move(data));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data().size());
  for (float v : img.data()) out.push_back(quantize(v));
  return out;
}

GrayImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    if (is_png(bytes)) return decode_png(bytes);
    if (is_pgm(bytes)) return decode_pgm(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
  fail(Errc::format, path.string() + ": unrecognized image format (expected PNG or P5 PGM)");
}

void write_image(const GrayImage& img, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pgm" || ext == ".PGM") {
    write_file(path, encode_pgm(img));
  } else {
    write_file(path, encode_png(img));
  }
}

}  // namespace wormloc::io
