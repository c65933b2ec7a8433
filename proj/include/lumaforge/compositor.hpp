#pragma once

// Cut-and-paste scene synthesis: warped object crops are placed on background
// crops under a pairwise overlap cap, blended with an eroded mask plus
// Gaussian noise, and annotated from their (un-eroded) visible masks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "lumaforge/cocoio.hpp"
#include "lumaforge/error.hpp"
#include "lumaforge/harvest.hpp"
#include "lumaforge/imgcore.hpp"
#include "lumaforge/parallel.hpp"
#include "lumaforge/random.hpp"
#include "lumaforge/raster_io.hpp"

namespace lumaforge::compose {

namespace fs = std::filesystem;
using harvest::CropRecord;

struct SceneSpec {
  int canvas_width = 512;
  int canvas_height = 512;
  int objects_min = 3;
  int objects_max = 8;
  double max_overlap = 0.20;
  double scale_min = 0.5;
  double scale_max = 1.5;
  double rotation_min = 0.0;
  double rotation_max = 360.0;
  int max_placement_attempts = 100;
  int erosion_radius = 1;
  double noise_sigma = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (canvas_width < 1 || canvas_height < 1) throw ConfigError("canvas must be at least 1x1");
    if (!(max_overlap >= 0.0 && max_overlap < 1.0))
      throw ConfigError("max_overlap must be in [0, 1)");
    if (!(scale_min > 0.0)) throw ConfigError("scale_min must be > 0");
    if (scale_max < scale_min) throw ConfigError("scale_max must be >= scale_min");
    if (objects_min < 1) throw ConfigError("objects_min must be >= 1");
    if (objects_max < objects_min) throw ConfigError("objects_max must be >= objects_min");
    if (!(rotation_min >= 0.0 && rotation_max <= 360.0 && rotation_min <= rotation_max))
      throw ConfigError("rotation range must satisfy 0 <= min <= max <= 360");
    if (max_placement_attempts < 1) throw ConfigError("max_placement_attempts must be >= 1");
    if (erosion_radius < 0) throw ConfigError("erosion_radius must be >= 0");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  }
};

/// Exactly two draws: scale, then rotation. Translation is left at zero and
/// chosen during placement.
inline AffineParams draw_affine(Rng& rng, const SceneSpec& spec) {
  const double scale = rng.uniform(spec.scale_min, spec.scale_max);
  const double rotation = rng.uniform(spec.rotation_min, spec.rotation_max);
  return AffineParams::make(scale, rotation);
}

struct WarpedCrop {
  ImageRGB8 patch;  // zero outside mask
  BitMask mask;
};

class DegenerateWarp : public Error {
public:
  using Error::Error;
};

namespace detail {

// cos/sin with exact values on multiples of 90 degrees.
inline std::pair<double, double> cos_sin_degrees(double deg) {
  const double r = normalize_degrees(deg);
  if (r == 0.0) return {1.0, 0.0};
  if (r == 90.0) return {0.0, 1.0};
  if (r == 180.0) return {-1.0, 0.0};
  if (r == 270.0) return {0.0, -1.0};
  const double rad = r * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

inline std::uint8_t bilinear_channel(const ImageRGB8& img, double sx, double sy, int ch) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  auto sample = [&](int x, int y) {
    x = std::clamp(x, 0, img.width() - 1);
    y = std::clamp(y, 0, img.height() - 1);
    return static_cast<double>(
        img.bytes()[(static_cast<std::size_t>(y) * img.width() + x) * 3 + ch]);
  };
  const double top = sample(x0, y0) * (1 - fx) + sample(x0 + 1, y0) * fx;
  const double bot = sample(x0, y0 + 1) * (1 - fx) + sample(x0 + 1, y0 + 1) * fx;
  const double v = top * (1 - fy) + bot * fy;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

/// Scales and rotates a crop about its centre. Colour is resampled
/// bilinearly, the mask by nearest neighbour; the result is cropped to the
/// transformed mask's tight box. Translation fields are ignored.
inline WarpedCrop warp_crop(const CropRecord& crop, const AffineParams& a) {
  if (!(a.scale > 0)) throw ConfigError("affine scale must be > 0");
  const int w = crop.patch.width();
  const int h = crop.patch.height();
  const auto [c, s] = detail::cos_sin_degrees(a.rotation);
  const double half_x = a.scale * (std::fabs(c) * w + std::fabs(s) * h) / 2.0;
  const double half_y = a.scale * (std::fabs(s) * w + std::fabs(c) * h) / 2.0;
  const int ow = std::max(1, static_cast<int>(std::ceil(2.0 * half_x - 1e-9)));
  const int oh = std::max(1, static_cast<int>(std::ceil(2.0 * half_y - 1e-9)));
  const double ocx = ow / 2.0, ocy = oh / 2.0;
  const double icx = w / 2.0, icy = h / 2.0;

  ImageRGB8 patch(ow, oh);
  BitMask mask(ow, oh);
  for (int j = 0; j < oh; ++j) {
    const double dy = j + 0.5 - ocy;
    for (int i = 0; i < ow; ++i) {
      const double dx = i + 0.5 - ocx;
      const double px = (c * dx + s * dy) / a.scale + icx;
      const double py = (-s * dx + c * dy) / a.scale + icy;
      const int sx = static_cast<int>(std::floor(px));
      const int sy = static_cast<int>(std::floor(py));
      if (!crop.mask.test(sx, sy)) continue;
      mask.set(i, j);
      patch.set(i, j,
                {detail::bilinear_channel(crop.patch, px - 0.5, py - 0.5, 0),
                 detail::bilinear_channel(crop.patch, px - 0.5, py - 0.5, 1),
                 detail::bilinear_channel(crop.patch, px - 0.5, py - 0.5, 2)});
    }
  }
  const auto box = mask_to_bbox(mask);
  if (!box) throw DegenerateWarp("crop vanished under the warp (scale too small?)");
  if (box->w == ow && box->h == oh) return {std::move(patch), std::move(mask)};
  return {lumaforge::crop(patch, *box), lumaforge::crop(mask, *box)};
}

/// |a∩b| / min(|a|, |b|); 0 when either mask is empty.
inline double overlap_fraction(const BitMask& a, const BitMask& b) {
  const std::size_t na = a.area();
  const std::size_t nb = b.area();
  if (na == 0 || nb == 0) return 0.0;
  return static_cast<double>(intersection_area(a, b)) / static_cast<double>(std::min(na, nb));
}

struct PlacedInstance {
  std::size_t crop_ref = 0;  // index into the library
  int category_id = 0;
  AffineParams affine;       // tx, ty = canvas position of the warped patch
  WarpedCrop warped;
  BBox footprint;            // warped patch rectangle on the canvas
  std::size_t full_area = 0;
  BitMask full_mask;         // canvas-sized
  BitMask visible_mask;      // full mask minus every later instance
  std::optional<BBox> bbox;  // of visible_mask
  int z_order = 0;
};

struct SkipRecord {
  std::size_t crop_ref = 0;
  std::string reason;
};

struct Placement {
  int requested = 0;
  std::vector<PlacedInstance> instances;
  std::vector<SkipRecord> skips;
};

namespace detail {

// Overlap between a candidate at `box` and a placed instance, counted on the
// shared part of their footprints.
inline std::size_t local_intersection(const BitMask& mask, const BBox& box,
                                      const PlacedInstance& other) {
  const BBox& ob = other.footprint;
  const int x0 = std::max(box.x, ob.x), x1 = std::min(box.right(), ob.right());
  const int y0 = std::max(box.y, ob.y), y1 = std::min(box.bottom(), ob.bottom());
  std::size_t n = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      n += mask.get(x - box.x, y - box.y) && other.warped.mask.get(x - ob.x, y - ob.y);
  return n;
}

}  // namespace detail

/// Fills full_mask, visible_mask and bbox of each instance; later entries
/// are on top.
inline void resolve_visibility(std::vector<PlacedInstance>& instances, int cw, int ch) {
  BitMask covered(cw, ch);
  for (auto& inst : instances)
    inst.full_mask = place_mask(inst.warped.mask, inst.footprint.x, inst.footprint.y, cw, ch);
  for (auto it = instances.rbegin(); it != instances.rend(); ++it) {
    it->visible_mask = BitMask(cw, ch);
    auto vis = it->visible_mask.bits();
    auto cov = covered.bits();
    const auto full = it->full_mask.bits();
    for (std::size_t i = 0; i < full.size(); ++i) {
      vis[i] = full[i] & static_cast<std::uint8_t>(!cov[i]);
      cov[i] |= full[i];
    }
    it->bbox = mask_to_bbox(it->visible_mask);
  }
}

/// Draw order: object count; then per object the crop index, draw_affine,
/// and (tx, ty) per placement attempt. Objects that cannot fit or vanish
/// under the warp are skipped without position draws.
inline Placement place_instances(Rng& rng, const std::vector<CropRecord>& library,
                                 const SceneSpec& spec) {
  if (library.empty()) throw ConfigError("crop library is empty");
  const int cw = spec.canvas_width;
  const int ch = spec.canvas_height;
  Placement out;
  out.requested = static_cast<int>(rng.uniform_int(spec.objects_min, spec.objects_max));

  for (int k = 0; k < out.requested; ++k) {
    const auto ref = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(library.size()) - 1));
    AffineParams affine = draw_affine(rng, spec);
    WarpedCrop warped;
    try {
      warped = warp_crop(library[ref], affine);
    } catch (const DegenerateWarp&) {
      out.skips.push_back({ref, "degenerate warp"});
      continue;
    }
    const int ww = warped.mask.width();
    const int wh = warped.mask.height();
    if (ww > cw || wh > ch) {
      out.skips.push_back({ref, fmt::format("does not fit ({}x{} on {}x{})", ww, wh, cw, ch)});
      continue;
    }
    const std::size_t area = warped.mask.area();
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_placement_attempts && !placed; ++attempt) {
      const BBox box{static_cast<int>(rng.uniform_int(0, cw - ww)),
                     static_cast<int>(rng.uniform_int(0, ch - wh)), ww, wh};
      bool ok = true;
      for (const auto& other : out.instances) {
        const std::size_t inter = detail::local_intersection(warped.mask, box, other);
        if (inter == 0) continue;
        const double frac =
            static_cast<double>(inter) / static_cast<double>(std::min(area, other.full_area));
        if (frac > spec.max_overlap) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      PlacedInstance inst;
      inst.crop_ref = ref;
      inst.category_id = library[ref].category_id;
      affine.tx = box.x;
      affine.ty = box.y;
      inst.affine = affine;
      inst.footprint = box;
      inst.full_area = area;
      inst.z_order = static_cast<int>(out.instances.size());
      inst.warped = std::move(warped);
      out.instances.push_back(std::move(inst));
      placed = true;
    }
    if (!placed)
      out.skips.push_back(
          {ref, fmt::format("no position after {} attempts", spec.max_placement_attempts)});
  }

  resolve_visibility(out.instances, cw, ch);
  return out;
}

/// Pastes the instance's warped patch under erode(full_mask, erosion_radius),
/// adding N(0, noise_sigma^2) per channel. Noise draws run over pasted pixels
/// in raster order, R, G, B; none are drawn when noise_sigma is 0.
inline void blend(ImageRGB8& canvas, const PlacedInstance& inst, Rng& rng,
                  const SceneSpec& spec) {
  const BitMask paste = erode(inst.warped.mask, spec.erosion_radius);
  const auto& patch = inst.warped.patch;
  const bool noisy = spec.noise_sigma > 0.0;
  for (int y = 0; y < paste.height(); ++y) {
    for (int x = 0; x < paste.width(); ++x) {
      if (!paste.get(x, y)) continue;
      Rgb src = patch.at(x, y);
      if (noisy) {
        auto jitter = [&](std::uint8_t v) {
          const double n = static_cast<double>(v) + spec.noise_sigma * rng.normal();
          return static_cast<std::uint8_t>(std::clamp(std::lround(n), 0L, 255L));
        };
        src.r = jitter(src.r);
        src.g = jitter(src.g);
        src.b = jitter(src.b);
      }
      canvas.set(inst.footprint.x + x, inst.footprint.y + y, src);
    }
  }
}

// ---------------------------------------------------------------------------
// Backgrounds

struct BackgroundKey {
  std::size_t file_index = 0;
  BBox rect;
  friend auto operator<=>(const BackgroundKey& a, const BackgroundKey& b) {
    return std::tie(a.file_index, a.rect.x, a.rect.y, a.rect.w, a.rect.h) <=>
           std::tie(b.file_index, b.rect.x, b.rect.y, b.rect.w, b.rect.h);
  }
  friend bool operator==(const BackgroundKey&, const BackgroundKey&) = default;
};

class PoolExhausted : public Error {
public:
  using Error::Error;
};

/// Background photos handed out as canvas-sized crops on an 8-px grid. A
/// (file, rect) key is never issued twice. reserve() is serialized.
class BackgroundPool {
public:
  static constexpr int kGrid = 8;

  explicit BackgroundPool(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("not a readable directory: " + dir.string());
    for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
      if (it->is_regular_file() && is_raster_file(it->path())) files_.push_back(it->path());
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    std::sort(files_.begin(), files_.end());
    init();
  }

  explicit BackgroundPool(std::vector<fs::path> files) : files_(std::move(files)) { init(); }

  std::size_t size() const noexcept { return files_.size(); }
  const fs::path& file(std::size_t i) const { return files_.at(i); }
  std::pair<int, int> dims(std::size_t i) const { return dims_.at(i); }

  /// Throws IoError naming the first file smaller than the canvas.
  void require_at_least(int width, int height) const {
    for (std::size_t i = 0; i < files_.size(); ++i)
      if (dims_[i].first < width || dims_[i].second < height)
        throw IoError(fmt::format("background {} is {}x{}, smaller than the {}x{} canvas",
                                  files_[i].string(), dims_[i].first, dims_[i].second, width,
                                  height));
  }

  /// Grid cells per file for a canvas size (0 when the file is too small).
  std::uint64_t cells(std::size_t file_index, int width, int height) const {
    const auto [fw, fh] = dims_[file_index];
    if (fw < width || fh < height) return 0;
    return static_cast<std::uint64_t>((fw - width) / kGrid + 1) *
           static_cast<std::uint64_t>((fh - height) / kGrid + 1);
  }

  /// Uniform over unissued (file, rect) keys. Draws: up to 64 global slot
  /// draws by rejection, then one draw to pick the r-th free slot.
  BackgroundKey reserve(Rng& rng, int width, int height) {
    std::lock_guard lock(mutex_);
    std::vector<std::uint64_t> per_file(files_.size());
    std::uint64_t total = 0, used_total = 0;
    for (std::size_t f = 0; f < files_.size(); ++f) {
      per_file[f] = cells(f, width, height);
      total += per_file[f];
      used_total += used_count(f, width, height);
    }
    if (total == 0)
      throw IoError(fmt::format("no background is at least {}x{}", width, height));
    if (used_total >= total)
      throw PoolExhausted(fmt::format(
          "background pool exhausted: all {} distinct {}x{} crops issued; add more or larger "
          "background images",
          total, width, height));

    for (int tries = 0; tries < 64; ++tries) {
      auto slot = static_cast<std::uint64_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
      const auto key = slot_to_key(per_file, slot, width, height);
      if (!used_.count(key)) return issue(key);
    }
    auto r = static_cast<std::uint64_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(total - used_total) - 1));
    for (std::size_t f = 0; f < files_.size(); ++f) {
      const std::uint64_t free_here = per_file[f] - used_count(f, width, height);
      if (r >= free_here) {
        r -= free_here;
        continue;
      }
      for (std::uint64_t c = 0; c < per_file[f]; ++c) {
        const auto key = cell_key(f, c, width, height);
        if (used_.count(key)) continue;
        if (r == 0) return issue(key);
        --r;
      }
    }
    throw PoolExhausted("background pool bookkeeping out of sync");
  }

  std::size_t issued() const {
    std::lock_guard lock(mutex_);
    return used_.size();
  }

  ImageRGB8 fetch(const BackgroundKey& key) const {
    return lumaforge::crop(*load(key.file_index), key.rect);
  }

private:
  void init() {
    dims_.reserve(files_.size());
    for (const auto& f : files_) dims_.push_back(probe_image_size(f));
  }

  std::uint64_t used_count(std::size_t f, int w, int h) const {
    const auto it = used_per_file_.find({f, w, h});
    return it == used_per_file_.end() ? 0 : it->second;
  }

  BackgroundKey cell_key(std::size_t f, std::uint64_t cell, int width, int height) const {
    const auto cols = static_cast<std::uint64_t>((dims_[f].first - width) / kGrid + 1);
    return {f, BBox{static_cast<int>(cell % cols) * kGrid, static_cast<int>(cell / cols) * kGrid,
                    width, height}};
  }

  BackgroundKey slot_to_key(const std::vector<std::uint64_t>& per_file, std::uint64_t slot,
                            int width, int height) const {
    for (std::size_t f = 0; f < per_file.size(); ++f) {
      if (slot < per_file[f]) return cell_key(f, slot, width, height);
      slot -= per_file[f];
    }
    throw PoolExhausted("slot outside pool");
  }

  BackgroundKey issue(const BackgroundKey& key) {
    used_.insert(key);
    ++used_per_file_[{key.file_index, key.rect.w, key.rect.h}];
    return key;
  }

  std::shared_ptr<const ImageRGB8> load(std::size_t f) const {
    {
      std::lock_guard lock(cache_mutex_);
      for (auto it = cache_.begin(); it != cache_.end(); ++it) {
        if (it->first == f) {
          cache_.splice(cache_.begin(), cache_, it);
          return cache_.front().second;
        }
      }
    }
    auto img = std::make_shared<const ImageRGB8>(read_image(files_[f]));
    std::lock_guard lock(cache_mutex_);
    cache_.emplace_front(f, img);
    if (cache_.size() > kCacheSize) cache_.pop_back();
    return img;
  }

  static constexpr std::size_t kCacheSize = 8;

  std::vector<fs::path> files_;
  std::vector<std::pair<int, int>> dims_;
  std::set<BackgroundKey> used_;
  std::map<std::tuple<std::size_t, int, int>, std::uint64_t> used_per_file_;
  mutable std::mutex mutex_;
  mutable std::mutex cache_mutex_;
  mutable std::list<std::pair<std::size_t, std::shared_ptr<const ImageRGB8>>> cache_;
};

inline ImageRGB8 next_background(Rng& rng, BackgroundPool& pool, int width, int height) {
  return pool.fetch(pool.reserve(rng, width, height));
}

// ---------------------------------------------------------------------------
// Dataset composition

/// Stream used for background reservation, separate from the scene streams.
inline constexpr std::uint64_t kBackgroundStreamSalt = 0x9E3779B97F4A7C15ull;

inline std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ static_cast<std::uint64_t>(index);
}

inline std::string scene_file_name(std::int64_t image_id) {
  return fmt::format("images/{:06d}.png", image_id);
}

struct SceneLog {
  std::int64_t image_id = 0;
  std::uint64_t seed = 0;
  std::string background_file;
  BBox background_rect;
  int requested = 0;
  int placed = 0;
  std::vector<SkipRecord> skips;
  std::vector<int> dropped;  // z_order of instances left out of the annotations
};

struct ComposedScene {
  std::size_t index = 0;
  std::int64_t image_id = 0;
  std::string file_name;
  ImageRGB8 image;
  std::vector<PlacedInstance> instances;
  std::vector<coco::Annotation> annotations;  // ids assigned after aggregation
  SceneLog log;
};

struct ComposeOptions {
  int jobs = 1;
  std::map<std::int64_t, std::string> category_names;  // falls back to default names
  // Called once per scene, possibly concurrently from worker threads.
  std::function<void(const ComposedScene&)> on_scene;
  bool keep_images = true;
};

struct ComposeResult {
  std::vector<ImageRGB8> images;  // empty unless keep_images
  coco::Dataset dataset;
  std::vector<SceneLog> log;
};

/// Instances whose visible area is under 1% of their full area stay rendered
/// but are left out of the annotations.
inline bool keep_annotation(std::size_t visible_area, std::size_t full_area) {
  return visible_area > 0 && visible_area * 100 >= full_area;
}

/// Annotations (id 0) for the kept instances; z orders of the others go to
/// `dropped`.
inline std::vector<coco::Annotation> annotate(const std::vector<PlacedInstance>& instances,
                                              std::int64_t image_id,
                                              std::vector<int>* dropped = nullptr) {
  std::vector<coco::Annotation> out;
  for (const auto& inst : instances) {
    if (!keep_annotation(inst.visible_mask.area(), inst.full_area)) {
      if (dropped) dropped->push_back(inst.z_order);
      continue;
    }
    out.push_back(coco::make_annotation(0, image_id, inst.category_id, inst.visible_mask));
  }
  return out;
}

inline ComposedScene compose_scene(const std::vector<CropRecord>& library,
                                   const BackgroundPool& pool, const BackgroundKey& bg,
                                   const SceneSpec& spec, std::size_t index) {
  ComposedScene scene;
  scene.index = index;
  scene.image_id = static_cast<std::int64_t>(index) + 1;
  scene.file_name = scene_file_name(scene.image_id);
  scene.log.image_id = scene.image_id;
  scene.log.seed = scene_seed(spec.seed, index);
  scene.log.background_file = pool.file(bg.file_index).filename().string();
  scene.log.background_rect = bg.rect;

  Rng rng(scene.log.seed);
  Placement placement = place_instances(rng, library, spec);
  scene.image = pool.fetch(bg);
  for (const auto& inst : placement.instances) blend(scene.image, inst, rng, spec);

  scene.log.requested = placement.requested;
  scene.log.placed = static_cast<int>(placement.instances.size());
  scene.log.skips = std::move(placement.skips);
  scene.annotations = annotate(placement.instances, scene.image_id, &scene.log.dropped);
  scene.instances = std::move(placement.instances);
  return scene;
}

/// Backgrounds are reserved up front in image order so that the output does
/// not depend on how scenes are scheduled across workers.
inline ComposeResult compose_dataset(const std::vector<CropRecord>& library, BackgroundPool& pool,
                                     const SceneSpec& spec, std::size_t n_images,
                                     const ComposeOptions& opts = {}) {
  spec.validate();
  if (library.empty()) throw ConfigError("crop library is empty");

  ComposeResult result;
  std::set<std::int64_t> category_ids;
  for (const auto& c : library) category_ids.insert(c.category_id);
  for (const auto id : category_ids) {
    const auto it = opts.category_names.find(id);
    result.dataset.categories.push_back(
        {id, it != opts.category_names.end() ? it->second : coco::default_category_name(id)});
  }
  if (n_images == 0) return result;

  pool.require_at_least(spec.canvas_width, spec.canvas_height);
  Rng bg_rng(spec.seed ^ kBackgroundStreamSalt);
  std::vector<BackgroundKey> backgrounds;
  backgrounds.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i)
    backgrounds.push_back(pool.reserve(bg_rng, spec.canvas_width, spec.canvas_height));

  std::vector<std::vector<coco::Annotation>> annotations(n_images);
  result.log.resize(n_images);
  if (opts.keep_images) result.images.resize(n_images);
  parallel_for(n_images, opts.jobs, [&](std::size_t i) {
    ComposedScene scene = compose_scene(library, pool, backgrounds[i], spec, i);
    if (opts.on_scene) opts.on_scene(scene);
    annotations[i] = std::move(scene.annotations);
    result.log[i] = std::move(scene.log);
    if (opts.keep_images) result.images[i] = std::move(scene.image);
  });

  std::int64_t next_id = 1;
  for (std::size_t i = 0; i < n_images; ++i) {
    const auto image_id = static_cast<std::int64_t>(i) + 1;
    result.dataset.images.push_back(
        {image_id, scene_file_name(image_id), spec.canvas_width, spec.canvas_height});
    for (auto& a : annotations[i]) {
      a.id = next_id++;
      result.dataset.annotations.push_back(std::move(a));
    }
  }
  return result;
}

inline nlohmann::ordered_json scene_log_json(const std::vector<SceneLog>& log) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : log) {
    nlohmann::ordered_json e;
    e["image_id"] = s.image_id;
    e["seed"] = s.seed;
    e["background"] = {{"file", s.background_file},
                       {"rect", {s.background_rect.x, s.background_rect.y, s.background_rect.w,
                                 s.background_rect.h}}};
    e["requested"] = s.requested;
    e["placed"] = s.placed;
    auto& skips = e["skips"] = nlohmann::ordered_json::array();
    for (const auto& k : s.skips) skips.push_back({{"crop_ref", k.crop_ref}, {"reason", k.reason}});
    e["dropped_z_orders"] = s.dropped;
    arr.push_back(std::move(e));
  }
  return arr;
}

}  // namespace lumaforge::compose
