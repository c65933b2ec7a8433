#pragma once

// Frame directory -> library of masked object crops.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "lumaforge/error.hpp"
#include "lumaforge/imgcore.hpp"
#include "lumaforge/keying.hpp"
#include "lumaforge/parallel.hpp"
#include "lumaforge/raster_io.hpp"

namespace lumaforge::harvest {

namespace fs = std::filesystem;

struct HarvestConfig {
  keying::KeySpec key;
  int frame_stride = 5;
  int margin = 2;
  std::optional<std::size_t> min_area;  // absolute override
  double min_area_fraction = 0.001;     // of frame pixels, used when min_area is unset
  int crop_padding = 4;
  Connectivity connectivity = Connectivity::Eight;
  int jobs = 1;

  void validate() const {
    key.validate();
    if (frame_stride < 1) throw ConfigError("frame_stride must be >= 1");
    if (crop_padding < 0) throw ConfigError("crop_padding must be >= 0");
    if (margin < 0) throw ConfigError("margin must be >= 0");
    if (!(min_area_fraction >= 0.0 && min_area_fraction <= 1.0))
      throw ConfigError("min_area_fraction must be in [0, 1]");
  }

  std::size_t min_area_for(int width, int height) const {
    if (min_area) return *min_area;
    return static_cast<std::size_t>(
        std::ceil(min_area_fraction * static_cast<double>(width) * height));
  }
};

struct CropRecord {
  int category_id = 1;
  ImageRGB8 patch;
  BitMask mask;
  std::string source;
  BBox source_bbox;  // crop rectangle in frame coordinates

  friend bool operator==(const CropRecord&, const CropRecord&) = default;
};

enum class FrameStatus { Accepted, RejectedBorder, RejectedArea };

inline const char* to_string(FrameStatus s) {
  switch (s) {
    case FrameStatus::Accepted: return "accepted";
    case FrameStatus::RejectedBorder: return "rejected_border";
    case FrameStatus::RejectedArea: return "rejected_area";
  }
  return "?";
}

struct FrameOutcome {
  std::string file;
  FrameStatus status = FrameStatus::RejectedArea;
  std::size_t area = 0;
  std::optional<int> threshold;
};

struct HarvestReport {
  std::size_t sampled = 0;
  std::size_t accepted = 0;
  std::size_t rejected_border = 0;
  std::size_t rejected_area = 0;
  std::vector<FrameOutcome> frames;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["sampled"] = sampled;
    j["accepted"] = accepted;
    j["rejected_border"] = rejected_border;
    j["rejected_area"] = rejected_area;
    auto& fr = j["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : frames) {
      nlohmann::ordered_json e;
      e["file"] = f.file;
      e["status"] = to_string(f.status);
      e["area"] = f.area;
      if (f.threshold) e["threshold"] = *f.threshold;
      fr.push_back(std::move(e));
    }
    return j;
  }
};

/// Raised when a recording yields no usable frame; carries the report.
class NoAcceptedFrames : public Error {
public:
  explicit NoAcceptedFrames(HarvestReport report)
      : Error(fmt::format("no frame accepted ({} sampled, {} rejected for area, {} at border)",
                          report.sampled, report.rejected_area, report.rejected_border)),
        report_(std::move(report)) {}
  const HarvestReport& report() const noexcept { return report_; }

private:
  HarvestReport report_;
};

struct HarvestResult {
  std::vector<CropRecord> crops;
  HarvestReport report;
};

/// Raster files of `dir` in lexicographic filename order.
inline std::vector<fs::path> list_frames(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a readable directory: " + dir.string());
  std::vector<fs::path> files;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file() && is_raster_file(it->path())) files.push_back(it->path());
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.filename().string() < b.filename().string();
            });
  return files;
}

/// Box grown by `pad` on every side, clamped to the frame.
inline BBox expand_clamped(const BBox& b, int pad, int width, int height) {
  const int x0 = std::max(0, b.x - pad);
  const int y0 = std::max(0, b.y - pad);
  const int x1 = std::min(width, b.right() + pad);
  const int y1 = std::min(height, b.bottom() + pad);
  return {x0, y0, x1 - x0, y1 - y0};
}

struct FrameHarvest {
  FrameOutcome outcome;
  std::optional<CropRecord> crop;
};

inline FrameHarvest harvest_frame(const ImageRGB8& frame, const std::string& name,
                                  int category_id, const HarvestConfig& cfg) {
  const auto seg = keying::segment(frame, cfg.key, cfg.margin, cfg.connectivity);
  FrameHarvest out;
  out.outcome.file = name;
  out.outcome.area = seg.area;
  out.outcome.threshold = seg.threshold_used;
  const std::size_t min_area = cfg.min_area_for(frame.width(), frame.height());
  if (seg.area == 0 || seg.area < min_area) {
    out.outcome.status = FrameStatus::RejectedArea;
  } else if (seg.touches_border) {
    out.outcome.status = FrameStatus::RejectedBorder;
  } else {
    out.outcome.status = FrameStatus::Accepted;
    const BBox box = expand_clamped(*seg.bbox, cfg.crop_padding, frame.width(), frame.height());
    out.crop = CropRecord{category_id, crop(frame, box), crop(seg.mask, box), name, box};
  }
  return out;
}

/// Keys every `frame_stride`-th frame of `dir` and collects the accepted
/// crops in frame order. Throws NoAcceptedFrames when nothing survives.
inline HarvestResult harvest_directory(const fs::path& dir, int category_id,
                                       const HarvestConfig& cfg) {
  cfg.validate();
  if (category_id < 1) throw ConfigError("category id must be >= 1");
  const auto files = list_frames(dir);
  if (files.empty()) throw IoError("no PNG/JPEG frames in " + dir.string());

  std::vector<fs::path> sampled;
  for (std::size_t i = 0; i < files.size(); i += static_cast<std::size_t>(cfg.frame_stride))
    sampled.push_back(files[i]);

  std::vector<FrameHarvest> per_frame(sampled.size());
  parallel_for(sampled.size(), cfg.jobs, [&](std::size_t i) {
    per_frame[i] = harvest_frame(read_image(sampled[i]), sampled[i].filename().string(),
                                 category_id, cfg);
  });

  HarvestResult result;
  result.report.sampled = sampled.size();
  for (auto& f : per_frame) {
    switch (f.outcome.status) {
      case FrameStatus::Accepted: ++result.report.accepted; break;
      case FrameStatus::RejectedBorder: ++result.report.rejected_border; break;
      case FrameStatus::RejectedArea: ++result.report.rejected_area; break;
    }
    result.report.frames.push_back(f.outcome);
    if (f.crop) result.crops.push_back(std::move(*f.crop));
  }
  if (result.crops.empty()) throw NoAcceptedFrames(std::move(result.report));
  return result;
}

inline constexpr int kLibraryVersion = 1;
inline constexpr const char* kManifestName = "library.json";

/// Writes `<dir>/crop_NNNNNN_{patch,mask}.png` plus `library.json`.
inline void save_library(const std::vector<CropRecord>& crops, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json manifest;
  manifest["version"] = kLibraryVersion;
  auto& records = manifest["records"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < crops.size(); ++i) {
    const auto& c = crops[i];
    const std::string patch_file = fmt::format("crop_{:06d}_patch.png", i);
    const std::string mask_file = fmt::format("crop_{:06d}_mask.png", i);
    write_png(dir / patch_file, c.patch);
    write_mask_png(dir / mask_file, c.mask);
    nlohmann::ordered_json r;
    r["category_id"] = c.category_id;
    r["patch_file"] = patch_file;
    r["mask_file"] = mask_file;
    r["source"] = c.source;
    r["source_bbox"] = {c.source_bbox.x, c.source_bbox.y, c.source_bbox.w, c.source_bbox.h};
    records.push_back(std::move(r));
  }
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / kManifestName).string());
  out << manifest.dump(2) << '\n';
}

inline std::vector<CropRecord> load_library(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + manifest_path.string() + ": " + e.what());
  }

  std::vector<CropRecord> crops;
  try {
    if (manifest.at("version").get<int>() != kLibraryVersion)
      throw IoError("unsupported library version in " + manifest_path.string());
    const auto& records = manifest.at("records");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      const auto where = fmt::format("record {} of {}", i, manifest_path.string());
      const auto patch_file = r.at("patch_file").get<std::string>();
      const auto mask_file = r.at("mask_file").get<std::string>();
      for (const auto& f : {patch_file, mask_file})
        if (!fs::exists(dir / f)) throw IoError(where + ": missing file " + f);
      CropRecord c;
      c.category_id = r.at("category_id").get<int>();
      c.source = r.at("source").get<std::string>();
      const auto b = r.at("source_bbox").get<std::vector<int>>();
      if (b.size() != 4) throw IoError(where + ": source_bbox needs 4 values");
      c.source_bbox = {b[0], b[1], b[2], b[3]};
      c.patch = read_image(dir / patch_file);
      c.mask = read_mask_png(dir / mask_file);
      if (c.patch.width() != c.mask.width() || c.patch.height() != c.mask.height())
        throw IoError(where + ": patch " + patch_file + " and mask " + mask_file +
                      " differ in size");
      if (c.source_bbox.w != c.patch.width() || c.source_bbox.h != c.patch.height())
        throw IoError(where + ": source_bbox does not match " + patch_file);
      if (!c.mask.any()) throw IoError(where + ": mask " + mask_file + " is empty");
      if (c.category_id < 1) throw IoError(where + ": category_id must be >= 1");
      crops.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + manifest_path.string() + ": " + e.what());
  }
  return crops;
}

}  // namespace lumaforge::harvest
