#pragma once

// Raster types and the pixel-level algorithms the keying and composition
// stages are built from. Everything here is a pure function over values.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lumaforge/error.hpp"

namespace lumaforge {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB image. Dimensions are at least 1x1.
class ImageRGB8 {
public:
  ImageRGB8() = default;
  ImageRGB8(int width, int height, Rgb fill = {}) : width_(width), height_(height) {
    if (width < 1 || height < 1)
      throw ConfigError("image dimensions must be positive, got " + std::to_string(width) +
                        "x" + std::to_string(height));
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill.r;
      data_[i + 1] = fill.g;
      data_[i + 2] = fill.b;
    }
  }
  ImageRGB8(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1 ||
        data_.size() != static_cast<std::size_t>(width) * height * 3)
      throw ConfigError("image buffer does not match " + std::to_string(width) + "x" +
                        std::to_string(height) + "x3");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  Rgb at(int x, int y) const {
    const std::size_t i = offset(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = offset(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }

  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  friend bool operator==(const ImageRGB8&, const ImageRGB8&) = default;

private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Binary mask, one byte (0/1) per pixel, row-major. May be 0x0.
class BitMask {
public:
  BitMask() = default;
  BitMask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0),
              fill ? 1 : 0) {
    if (width < 0 || height < 0) throw ConfigError("mask dimensions must be non-negative");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  bool get(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }
  // Out-of-bounds reads as unset.
  bool test(int x, int y) const noexcept { return contains(x, y) && bits_[index(x, y)]; }

  std::size_t area() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
  }
  bool any() const noexcept {
    return std::find(bits_.begin(), bits_.end(), 1) != bits_.end();
  }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::span<std::uint8_t> bits() noexcept { return bits_; }

  friend bool operator==(const BitMask&, const BitMask&) = default;

private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Integer pixel box, [x, x+w) x [y, y+h).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const noexcept { return x + w; }
  int bottom() const noexcept { return y + h; }
  bool inside(int width, int height) const noexcept {
    return x >= 0 && y >= 0 && w >= 1 && h >= 1 && right() <= width && bottom() <= height;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double normalize_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

/// Similarity transform applied to an object crop: uniform scale and rotation
/// about the crop centre, then translation of the warped patch's top-left
/// corner to (tx, ty) on the canvas.
struct AffineParams {
  double scale = 1.0;
  double rotation = 0.0;  // degrees, [0, 360)
  double tx = 0.0;
  double ty = 0.0;

  static AffineParams make(double scale, double rotation, double tx = 0, double ty = 0) {
    if (!(scale > 0)) throw ConfigError("affine scale must be > 0");
    return {scale, normalize_degrees(rotation), tx, ty};
  }
  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

enum class Connectivity { Four = 4, Eight = 8 };

inline Connectivity connectivity_from_int(int c) {
  if (c == 4) return Connectivity::Four;
  if (c == 8) return Connectivity::Eight;
  throw ConfigError("connectivity must be 4 or 8, got " + std::to_string(c));
}

/// Rec. 709 luma, rounded half-up. Integer arithmetic keeps it exact.
constexpr std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  const std::uint32_t acc = 2126u * r + 7152u * g + 722u * b + 5000u;
  const std::uint32_t v = acc / 10000u;
  return static_cast<std::uint8_t>(v > 255u ? 255u : v);
}

constexpr std::uint8_t luminance(Rgb c) noexcept { return luminance(c.r, c.g, c.b); }

/// Per-pixel component labels; 0 is background, components are 1..count.
struct LabelMap {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<std::int32_t> labels;

  std::int32_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

namespace detail {

inline std::span<const std::array<int, 2>> neighbour_offsets(Connectivity c) {
  static constexpr std::array<std::array<int, 2>, 8> kOffsets{{
      {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}}};
  return {kOffsets.data(), c == Connectivity::Four ? 4u : 8u};
}

}  // namespace detail

/// Labels foreground components. Labels are handed out in the order a raster
/// scan first meets each component.
inline LabelMap connected_components(const BitMask& mask, Connectivity conn) {
  LabelMap out{mask.width(), mask.height(), 0,
               std::vector<std::int32_t>(mask.size(), 0)};
  const int w = mask.width();
  const int h = mask.height();
  const auto offsets = detail::neighbour_offsets(conn);
  std::vector<std::int32_t> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto seed = static_cast<std::int32_t>(y * w + x);
      if (!mask.get(x, y) || out.labels[seed] != 0) continue;
      const std::int32_t label = ++out.count;
      out.labels[seed] = label;
      stack.push_back(seed);
      while (!stack.empty()) {
        const std::int32_t p = stack.back();
        stack.pop_back();
        const int px = p % w;
        const int py = p / w;
        for (const auto& d : offsets) {
          const int nx = px + d[0];
          const int ny = py + d[1];
          if (!mask.test(nx, ny)) continue;
          const auto q = static_cast<std::int32_t>(ny * w + nx);
          if (out.labels[q] != 0) continue;
          out.labels[q] = label;
          stack.push_back(q);
        }
      }
    }
  }
  return out;
}

/// Pixel count per label; index 0 is unused.
inline std::vector<std::size_t> component_areas(const LabelMap& labels) {
  std::vector<std::size_t> areas(static_cast<std::size_t>(labels.count) + 1, 0);
  for (auto l : labels.labels)
    if (l > 0) ++areas[static_cast<std::size_t>(l)];
  return areas;
}

/// Keeps the component with most pixels; ties go to the smallest label.
inline BitMask largest_component(const BitMask& mask, Connectivity conn) {
  const LabelMap labels = connected_components(mask, conn);
  BitMask out(mask.width(), mask.height());
  if (labels.count == 0) return out;
  const auto areas = component_areas(labels);
  std::int32_t best = 1;
  for (std::int32_t l = 2; l <= labels.count; ++l)
    if (areas[l] > areas[best]) best = l;
  auto dst = out.bits();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = labels.labels[i] == best ? 1 : 0;
  return out;
}

namespace detail {

// One 1-D pass of a square erosion: out[i] set iff in[i-r..i+r] all set, with
// out-of-range samples counting as unset.
inline void erode_line(const std::uint8_t* in, std::uint8_t* out, int n, std::ptrdiff_t stride,
                       int r) {
  // run = length of the set run ending at i
  std::vector<int> run(static_cast<std::size_t>(n));
  int cur = 0;
  for (int i = 0; i < n; ++i) {
    cur = in[i * stride] ? cur + 1 : 0;
    run[static_cast<std::size_t>(i)] = cur;
  }
  for (int i = 0; i < n; ++i) {
    const int end = i + r;
    out[i * stride] = (end < n && run[static_cast<std::size_t>(end)] >= 2 * r + 1) ? 1 : 0;
  }
}

}  // namespace detail

/// Erosion by a (2r+1)x(2r+1) square; pixels outside the image count as unset.
inline BitMask erode(const BitMask& mask, int radius) {
  if (radius < 0) throw ConfigError("erosion radius must be >= 0");
  if (radius == 0 || mask.size() == 0) return mask;
  const int w = mask.width();
  const int h = mask.height();
  BitMask tmp(w, h);
  BitMask out(w, h);
  for (int y = 0; y < h; ++y)
    detail::erode_line(mask.bits().data() + static_cast<std::size_t>(y) * w,
                       tmp.bits().data() + static_cast<std::size_t>(y) * w, w, 1, radius);
  for (int x = 0; x < w; ++x)
    detail::erode_line(tmp.bits().data() + x, out.bits().data() + x, h, w, radius);
  return out;
}

/// Sets every background pixel that cannot reach the image border through
/// 4-connected background.
inline BitMask fill_holes(const BitMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  BitMask outside(w, h);
  std::deque<std::pair<int, int>> queue;
  auto seed = [&](int x, int y) {
    if (!mask.get(x, y) && !outside.get(x, y)) {
      outside.set(x, y);
      queue.emplace_back(x, y);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  const auto offsets = detail::neighbour_offsets(Connectivity::Four);
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (const auto& d : offsets) {
      const int nx = x + d[0];
      const int ny = y + d[1];
      if (mask.contains(nx, ny)) seed(nx, ny);
    }
  }
  BitMask out(w, h);
  auto o = out.bits();
  auto b = outside.bits();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = b[i] ? 0 : 1;
  return out;
}

/// Tight box around the set pixels; nullopt for an empty mask.
inline std::optional<BBox> mask_to_bbox(const BitMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    const auto* row = mask.bits().data() + static_cast<std::size_t>(y) * mask.width();
    for (int x = 0; x < mask.width(); ++x) {
      if (!row[x]) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline std::size_t intersection_area(const BitMask& a, const BitMask& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw ConfigError("mask dimensions differ");
  std::size_t n = 0;
  const auto ab = a.bits();
  const auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) n += ab[i] & bb[i];
  return n;
}

/// |a∩b| / |a∪b|, 1.0 when both masks are empty.
inline double mask_iou(const BitMask& a, const BitMask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline ImageRGB8 crop(const ImageRGB8& img, const BBox& box) {
  if (!box.inside(img.width(), img.height())) throw ConfigError("crop box outside image");
  ImageRGB8 out(box.w, box.h);
  for (int y = 0; y < box.h; ++y) {
    const auto src = img.bytes().subspan(
        (static_cast<std::size_t>(box.y + y) * img.width() + box.x) * 3,
        static_cast<std::size_t>(box.w) * 3);
    std::copy(src.begin(), src.end(),
              out.bytes().begin() + static_cast<std::ptrdiff_t>(y) * box.w * 3);
  }
  return out;
}

inline BitMask crop(const BitMask& mask, const BBox& box) {
  if (!box.inside(mask.width(), mask.height())) throw ConfigError("crop box outside mask");
  BitMask out(box.w, box.h);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x) out.set(x, y, mask.get(box.x + x, box.y + y));
  return out;
}

/// Writes `local` into a zeroed canvas-sized mask at offset (ox, oy).
inline BitMask place_mask(const BitMask& local, int ox, int oy, int width, int height) {
  BitMask out(width, height);
  for (int y = 0; y < local.height(); ++y)
    for (int x = 0; x < local.width(); ++x)
      if (local.get(x, y)) out.set(ox + x, oy + y);
  return out;
}

}  // namespace lumaforge
