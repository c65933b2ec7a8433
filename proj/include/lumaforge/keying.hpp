#pragma once

// Foreground extraction for black-screen (luminance key) and green-screen
// (chroma key) recordings.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "lumaforge/error.hpp"
#include "lumaforge/imgcore.hpp"

namespace lumaforge::keying {

enum class KeyMode { Luminance, Chroma };

inline std::string to_string(KeyMode m) {
  return m == KeyMode::Luminance ? "luminance" : "chroma";
}

inline KeyMode key_mode_from_string(const std::string& s) {
  if (s == "luminance") return KeyMode::Luminance;
  if (s == "chroma") return KeyMode::Chroma;
  throw ConfigError("unknown key mode '" + s + "' (expected luminance or chroma)");
}

/// Fixed threshold used when auto mode is switched off without a value.
inline constexpr int kManualThresholdDefault = 40;

struct KeySpec {
  KeyMode mode = KeyMode::Luminance;
  std::optional<int> threshold;  // nullopt = auto (Otsu)
  double key_hue = 120.0;        // degrees
  double hue_tolerance = 30.0;   // degrees, (0, 90]
  double min_saturation = 0.25;
  double min_value = 0.15;

  void validate() const {
    if (threshold && (*threshold < 0 || *threshold > 256))
      throw ConfigError("threshold must be in [0, 256]");
    if (!(hue_tolerance > 0.0 && hue_tolerance <= 90.0))
      throw ConfigError("hue_tolerance must be in (0, 90]");
    if (!(key_hue >= 0.0 && key_hue < 360.0)) throw ConfigError("key_hue must be in [0, 360)");
    if (!(min_saturation >= 0.0 && min_saturation <= 1.0))
      throw ConfigError("min_saturation must be in [0, 1]");
    if (!(min_value >= 0.0 && min_value <= 1.0))
      throw ConfigError("min_value must be in [0, 1]");
  }
};

struct SegmentationResult {
  BitMask mask;
  std::optional<BBox> bbox;
  std::size_t area = 0;
  bool touches_border = false;
  std::optional<int> threshold_used;  // luminance mode only
};

using Histogram = std::array<std::uint64_t, 256>;

inline Histogram luma_histogram(const ImageRGB8& img) {
  Histogram h{};
  const auto px = img.bytes();
  for (std::size_t i = 0; i < px.size(); i += 3) ++h[luminance(px[i], px[i + 1], px[i + 2])];
  return h;
}

/// Otsu's threshold on the luma histogram. Foreground is luma >= t; the
/// returned t maximises between-class variance, smallest t on ties. A
/// single-valued histogram yields value + 1 (empty foreground).
inline int otsu_threshold(const Histogram& hist) {
  std::uint64_t total = 0;
  double total_sum = 0;
  int distinct = 0;
  int only = 0;
  for (int v = 0; v < 256; ++v) {
    total += hist[v];
    total_sum += static_cast<double>(hist[v]) * v;
    if (hist[v]) {
      ++distinct;
      only = v;
    }
  }
  if (total == 0) throw ConfigError("auto threshold needs a nonempty image");
  if (distinct == 1) return only + 1;

  // Class "below" holds luma < t.
  std::uint64_t below = 0;
  double below_sum = 0;
  double best = -1.0;
  int best_t = 1;
  const double n = static_cast<double>(total);
  for (int t = 1; t <= 255; ++t) {
    below += hist[t - 1];
    below_sum += static_cast<double>(hist[t - 1]) * (t - 1);
    const std::uint64_t above = total - below;
    if (below == 0 || above == 0) continue;
    // N^2 * sigma_b^2 * (w0 w1) scaled form: (N*S0 - W0*S)^2 / (W0*W1)
    const double d = n * below_sum - static_cast<double>(below) * total_sum;
    const double score = d * d / (static_cast<double>(below) * static_cast<double>(above));
    if (score > best) {
      best = score;
      best_t = t;
    }
  }
  return best_t;
}

inline int auto_threshold(const ImageRGB8& img) {
  if (img.empty()) throw ConfigError("auto threshold needs a nonempty image");
  return otsu_threshold(luma_histogram(img));
}

/// { p : luminance(p) >= t }, before any refinement.
inline BitMask luminance_mask(const ImageRGB8& img, int threshold) {
  BitMask m(img.width(), img.height());
  auto bits = m.bits();
  const auto px = img.bytes();
  for (std::size_t i = 0, j = 0; j < bits.size(); i += 3, ++j)
    bits[j] = luminance(px[i], px[i + 1], px[i + 2]) >= threshold ? 1 : 0;
  return m;
}

struct Hsv {
  double h = 0;  // degrees [0, 360)
  double s = 0;  // [0, 1]
  double v = 0;  // [0, 1]
};

inline Hsv to_hsv(Rgb c) {
  const int mx = std::max({c.r, c.g, c.b});
  const int mn = std::min({c.r, c.g, c.b});
  const int delta = mx - mn;
  Hsv out;
  out.v = mx / 255.0;
  out.s = mx == 0 ? 0.0 : static_cast<double>(delta) / mx;
  if (delta == 0) return out;
  double h;
  if (mx == c.r)
    h = 60.0 * static_cast<double>(c.g - c.b) / delta;
  else if (mx == c.g)
    h = 60.0 * (2.0 + static_cast<double>(c.b - c.r) / delta);
  else
    h = 60.0 * (4.0 + static_cast<double>(c.r - c.g) / delta);
  out.h = normalize_degrees(h);
  return out;
}

inline double hue_distance(double a, double b) {
  const double d = std::fabs(a - b);
  return std::min(d, 360.0 - d);
}

inline bool is_key_colour(Rgb c, const KeySpec& spec) {
  const Hsv hsv = to_hsv(c);
  return hue_distance(hsv.h, spec.key_hue) <= spec.hue_tolerance &&
         hsv.s >= spec.min_saturation && hsv.v >= spec.min_value;
}

/// Complement of the key-coloured pixels, before refinement.
inline BitMask chroma_mask(const ImageRGB8& img, const KeySpec& spec) {
  BitMask m(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) m.set(x, y, !is_key_colour(img.at(x, y), spec));
  return m;
}

/// Largest component, then hole filling.
inline BitMask refine_mask(const BitMask& raw, Connectivity conn = Connectivity::Eight) {
  if (!raw.any()) return BitMask(raw.width(), raw.height());
  return fill_holes(largest_component(raw, conn));
}

/// True iff some set pixel is closer than `margin` pixels to an edge, i.e.
/// lies in the outermost `margin` rows/columns.
inline bool touches_border(const BitMask& mask, int margin) {
  if (margin <= 0) return false;
  const auto box = mask_to_bbox(mask);
  if (!box) return false;
  return box->x < margin || box->y < margin || mask.width() - box->right() < margin ||
         mask.height() - box->bottom() < margin;
}

namespace detail {

inline SegmentationResult finish(BitMask refined, int margin, std::optional<int> threshold) {
  SegmentationResult res;
  res.bbox = mask_to_bbox(refined);
  res.area = refined.area();
  res.touches_border = touches_border(refined, margin);
  res.threshold_used = threshold;
  res.mask = std::move(refined);
  return res;
}

}  // namespace detail

inline SegmentationResult segment_luminance(const ImageRGB8& img, const KeySpec& spec,
                                            int margin,
                                            Connectivity conn = Connectivity::Eight) {
  if (spec.mode != KeyMode::Luminance) throw ConfigError("segment_luminance needs luminance mode");
  const int t = spec.threshold ? *spec.threshold : auto_threshold(img);
  return detail::finish(refine_mask(luminance_mask(img, t), conn), margin, t);
}

inline SegmentationResult segment_chroma(const ImageRGB8& img, const KeySpec& spec, int margin,
                                         Connectivity conn = Connectivity::Eight) {
  if (spec.mode != KeyMode::Chroma) throw ConfigError("segment_chroma needs chroma mode");
  return detail::finish(refine_mask(chroma_mask(img, spec), conn), margin, std::nullopt);
}

inline SegmentationResult segment(const ImageRGB8& img, const KeySpec& spec, int margin,
                                  Connectivity conn = Connectivity::Eight) {
  return spec.mode == KeyMode::Luminance ? segment_luminance(img, spec, margin, conn)
                                         : segment_chroma(img, spec, margin, conn);
}

inline bool accept_frame(const SegmentationResult& res, std::size_t min_area) {
  return res.area > 0 && res.area >= min_area && !res.touches_border;
}

}  // namespace lumaforge::keying
