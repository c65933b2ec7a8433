#pragma once

// PNG (read/write) and JPEG (read) for 8-bit rasters.

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

// jpeglib.h expects size_t/FILE to be declared first.
#include <jpeglib.h>

#include "lumaforge/error.hpp"
#include "lumaforge/imgcore.hpp"

namespace lumaforge {

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return buf;
}

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path.string());
}

struct PngImage {
  png_image img{};
  PngImage() {
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

inline void begin_png(PngImage& p, const std::vector<std::uint8_t>& bytes,
                      const std::filesystem::path& path) {
  if (!png_image_begin_read_from_memory(&p.img, bytes.data(), bytes.size()))
    throw IoError("bad PNG " + path.string() + ": " + p.img.message);
  if (p.img.format & PNG_FORMAT_FLAG_LINEAR)
    throw IoError("unsupported bit depth in " + path.string() + " (8-bit only)");
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit_throwless(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// The longjmp target only touches POD state; the caller owns `bytes`.
inline bool decode_jpeg(const std::vector<std::uint8_t>& bytes, bool header_only, int& width,
                        int& height, std::vector<std::uint8_t>& rgb, std::string& message) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit_throwless;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    message = err.message;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  width = static_cast<int>(cinfo.image_width);
  height = static_cast<int>(cinfo.image_height);
  if (!header_only) {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    rgb.assign(static_cast<std::size_t>(width) * height * 3, 0);
    while (cinfo.output_scanline < cinfo.output_height) {
      JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace detail

inline bool is_raster_file(const std::filesystem::path& p) {
  const auto ext = detail::lower_extension(p);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Reads a PNG or JPEG as RGB8. Gray/palette inputs are expanded and alpha
/// is dropped; 16-bit inputs are rejected.
inline ImageRGB8 read_image(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  const auto ext = detail::lower_extension(path);
  if (ext == ".jpg" || ext == ".jpeg") {
    int w = 0, h = 0;
    std::vector<std::uint8_t> rgb;
    std::string msg;
    if (!detail::decode_jpeg(bytes, false, w, h, rgb, msg))
      throw IoError("bad JPEG " + path.string() + ": " + msg);
    return ImageRGB8(w, h, std::move(rgb));
  }
  detail::PngImage p;
  detail::begin_png(p, bytes, path);
  p.img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(p.img));
  if (!png_image_finish_read(&p.img, nullptr, rgb.data(), 0, nullptr))
    throw IoError("bad PNG " + path.string() + ": " + p.img.message);
  return ImageRGB8(static_cast<int>(p.img.width), static_cast<int>(p.img.height),
                   std::move(rgb));
}

/// Width and height without decoding pixel data.
inline std::pair<int, int> probe_image_size(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  const auto ext = detail::lower_extension(path);
  if (ext == ".jpg" || ext == ".jpeg") {
    int w = 0, h = 0;
    std::vector<std::uint8_t> unused;
    std::string msg;
    if (!detail::decode_jpeg(bytes, true, w, h, unused, msg))
      throw IoError("bad JPEG " + path.string() + ": " + msg);
    return {w, h};
  }
  detail::PngImage p;
  detail::begin_png(p, bytes, path);
  return {static_cast<int>(p.img.width), static_cast<int>(p.img.height)};
}

inline std::vector<std::uint8_t> encode_png(const ImageRGB8& img) {
  detail::PngImage p;
  p.img.width = static_cast<png_uint_32>(img.width());
  p.img.height = static_cast<png_uint_32>(img.height());
  p.img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(p.img, size, 0, img.bytes().data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + p.img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p.img, out.data(), &size, 0, img.bytes().data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + p.img.message);
  out.resize(size);
  return out;
}

inline void write_png(const std::filesystem::path& path, const ImageRGB8& img) {
  const auto bytes = encode_png(img);
  detail::write_bytes(path, bytes.data(), bytes.size());
}

/// Masks are stored as 8-bit grayscale, 0 or 255.
inline void write_mask_png(const std::filesystem::path& path, const BitMask& mask) {
  if (mask.width() < 1 || mask.height() < 1) throw IoError("cannot write empty-sized mask");
  std::vector<std::uint8_t> gray(mask.size());
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = bits[i] ? 255 : 0;
  detail::PngImage p;
  p.img.width = static_cast<png_uint_32>(mask.width());
  p.img.height = static_cast<png_uint_32>(mask.height());
  p.img.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(p.img, size, 0, gray.data(), 0, nullptr))
    throw IoError("PNG encode failed for " + path.string());
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p.img, out.data(), &size, 0, gray.data(), 0, nullptr))
    throw IoError("PNG encode failed for " + path.string());
  detail::write_bytes(path, out.data(), size);
}

/// Reads a mask PNG; any value other than 0 or 255 is an error.
inline BitMask read_mask_png(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  detail::PngImage p;
  detail::begin_png(p, bytes, path);
  p.img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> gray(PNG_IMAGE_SIZE(p.img));
  if (!png_image_finish_read(&p.img, nullptr, gray.data(), 0, nullptr))
    throw IoError("bad PNG " + path.string() + ": " + p.img.message);
  BitMask mask(static_cast<int>(p.img.width), static_cast<int>(p.img.height));
  auto bits = mask.bits();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    if (gray[i] != 0 && gray[i] != 255)
      throw IoError("mask " + path.string() + " is not binary (0/255)");
    bits[i] = gray[i] ? 1 : 0;
  }
  return mask;
}

}  // namespace lumaforge
