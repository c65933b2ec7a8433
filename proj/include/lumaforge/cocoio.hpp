#pragma once

// COCO detection dataset model with uncompressed RLE segmentations.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "lumaforge/error.hpp"
#include "lumaforge/imgcore.hpp"

namespace lumaforge::coco {

/// Uncompressed COCO RLE: alternating background/foreground run lengths over
/// column-major pixels, starting with a (possibly empty) background run.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

inline RleMask encode_rle(const BitMask& mask) {
  RleMask rle{mask.height(), mask.width(), {}};
  bool current = false;
  std::int64_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const bool v = mask.get(x, y);
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

/// Empty string when the RLE is well formed, otherwise what is wrong.
inline std::string rle_problem(const RleMask& rle) {
  if (rle.height < 0 || rle.width < 0) return "negative size";
  if (rle.counts.empty()) return "no counts";
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    const auto c = rle.counts[i];
    if (c < 0 || (i > 0 && c < 1))
      return fmt::format("count {} at position {} is not allowed", c, i);
    sum += c;
  }
  const std::int64_t expected = static_cast<std::int64_t>(rle.height) * rle.width;
  if (sum != expected) return fmt::format("counts sum to {}, expected {}", sum, expected);
  return {};
}

inline BitMask decode_rle(const RleMask& rle) {
  if (auto problem = rle_problem(rle); !problem.empty())
    throw DataError({"invalid RLE: " + problem});
  BitMask mask(rle.width, rle.height);
  std::int64_t pos = 0;
  bool fg = false;
  for (const auto c : rle.counts) {
    if (fg) {
      for (std::int64_t i = pos; i < pos + c; ++i) {
        const int x = static_cast<int>(i / rle.height);
        const int y = static_cast<int>(i % rle.height);
        mask.set(x, y);
      }
    }
    pos += c;
    fg = !fg;
  }
  return mask;
}

/// Sum of the foreground (odd-position) runs.
inline std::int64_t rle_area(const RleMask& rle) {
  std::int64_t a = 0;
  for (std::size_t i = 1; i < rle.counts.size(); i += 2) a += rle.counts[i];
  return a;
}

struct Image {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  friend bool operator==(const Image&, const Image&) = default;
};

struct Annotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  std::array<double, 4> bbox{};  // x, y, w, h
  double area = 0;
  RleMask segmentation;
  int iscrowd = 0;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Category {
  std::int64_t id = 0;
  std::string name;
  friend bool operator==(const Category&, const Category&) = default;
};

struct Dataset {
  std::vector<Image> images;
  std::vector<Annotation> annotations;
  std::vector<Category> categories;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Object names of the 21-object YCB-V set, indexed by category id - 1.
inline const std::array<const char*, 21>& ycbv_names() {
  static const std::array<const char*, 21> kNames{
      "002_master_chef_can", "003_cracker_box",      "004_sugar_box",
      "005_tomato_soup_can", "006_mustard_bottle",   "007_tuna_fish_can",
      "008_pudding_box",     "009_gelatin_box",      "010_potted_meat_can",
      "011_banana",          "019_pitcher_base",     "021_bleach_cleanser",
      "024_bowl",            "025_mug",              "035_power_drill",
      "036_wood_block",      "037_scissors",         "040_large_marker",
      "051_large_clamp",     "052_extra_large_clamp", "061_foam_brick"};
  return kNames;
}

/// YCB-V name for ids 1..21, "category_<id>" otherwise.
inline std::string default_category_name(std::int64_t id) {
  if (id >= 1 && id <= 21) return ycbv_names()[static_cast<std::size_t>(id - 1)];
  return fmt::format("category_{}", id);
}

inline Annotation make_annotation(std::int64_t id, std::int64_t image_id,
                                  std::int64_t category_id, const BitMask& mask) {
  Annotation a;
  a.id = id;
  a.image_id = image_id;
  a.category_id = category_id;
  if (const auto box = mask_to_bbox(mask))
    a.bbox = {double(box->x), double(box->y), double(box->w), double(box->h)};
  a.area = static_cast<double>(mask.area());
  a.segmentation = encode_rle(mask);
  return a;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  std::size_t count(const std::string& kind) const {
    std::size_t n = 0;
    for (const auto& v : violations) n += v.kind == kind;
    return n;
  }
  std::vector<std::string> lines() const {
    std::vector<std::string> out;
    for (const auto& v : violations) out.push_back(v.kind + ": " + v.detail);
    return out;
  }
};

/// Checks every dataset invariant and reports all failures.
inline ValidationReport validate(const Dataset& ds) {
  ValidationReport rep;
  auto add = [&](std::string kind, std::string detail) {
    rep.violations.push_back({std::move(kind), std::move(detail)});
  };

  std::map<std::int64_t, const Image*> images;
  for (const auto& im : ds.images) {
    if (!images.emplace(im.id, &im).second)
      add("duplicate id", fmt::format("image id {}", im.id));
    if (im.width < 1 || im.height < 1)
      add("invalid image size", fmt::format("image {} is {}x{}", im.id, im.width, im.height));
  }
  std::set<std::int64_t> categories;
  for (const auto& c : ds.categories)
    if (!categories.insert(c.id).second) add("duplicate id", fmt::format("category id {}", c.id));

  std::set<std::int64_t> ann_ids;
  for (const auto& a : ds.annotations) {
    const std::string who = fmt::format("annotation {}", a.id);
    if (!ann_ids.insert(a.id).second) add("duplicate id", who);
    if (!categories.count(a.category_id))
      add("dangling category_id", fmt::format("{} references category {}", who, a.category_id));
    if (a.iscrowd != 0) add("iscrowd", who + " has iscrowd != 0");

    const auto it = images.find(a.image_id);
    if (it == images.end()) {
      add("dangling image_id", fmt::format("{} references image {}", who, a.image_id));
    } else {
      const Image& im = *it->second;
      const auto [x, y, w, h] = a.bbox;
      if (!(x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= im.width && y + h <= im.height))
        add("bbox out of bounds",
            fmt::format("{} bbox [{}, {}, {}, {}] outside {}x{}", who, x, y, w, h, im.width,
                        im.height));
      if (a.segmentation.height != im.height || a.segmentation.width != im.width)
        add("rle size mismatch",
            fmt::format("{} segmentation is {}x{}, image is {}x{}", who,
                        a.segmentation.height, a.segmentation.width, im.height, im.width));
    }

    if (auto problem = rle_problem(a.segmentation); !problem.empty()) {
      add("invalid rle", who + ": " + problem);
      continue;
    }
    const BitMask decoded = decode_rle(a.segmentation);
    const auto pop = decoded.area();
    if (a.area != static_cast<double>(pop))
      add("area mismatch", fmt::format("{} area {} but mask has {} pixels", who, a.area, pop));
    if (const auto box = mask_to_bbox(decoded)) {
      const std::array<double, 4> tight{double(box->x), double(box->y), double(box->w),
                                        double(box->h)};
      if (tight != a.bbox)
        add("bbox mismatch",
            fmt::format("{} bbox [{}, {}, {}, {}] but mask box is [{}, {}, {}, {}]", who,
                        a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3], tight[0], tight[1],
                        tight[2], tight[3]));
    } else {
      add("empty segmentation", who);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// JSON

using ojson = nlohmann::ordered_json;

inline ojson to_json(const Dataset& ds) {
  ojson j;
  auto& images = j["images"] = ojson::array();
  for (const auto& im : ds.images)
    images.push_back(ojson{{"id", im.id},
                           {"file_name", im.file_name},
                           {"width", im.width},
                           {"height", im.height}});
  auto& anns = j["annotations"] = ojson::array();
  for (const auto& a : ds.annotations) {
    ojson e;
    e["id"] = a.id;
    e["image_id"] = a.image_id;
    e["category_id"] = a.category_id;
    e["bbox"] = a.bbox;
    e["area"] = a.area;
    e["segmentation"] = ojson{{"size", {a.segmentation.height, a.segmentation.width}},
                              {"counts", a.segmentation.counts}};
    e["iscrowd"] = a.iscrowd;
    anns.push_back(std::move(e));
  }
  auto& cats = j["categories"] = ojson::array();
  for (const auto& c : ds.categories) cats.push_back(ojson{{"id", c.id}, {"name", c.name}});
  return j;
}

inline std::string dump(const Dataset& ds) { return to_json(ds).dump(); }

namespace detail {

// Collects structural problems instead of stopping at the first one.
class Reader {
public:
  std::vector<std::string> problems;

  template <typename T>
  bool field(const nlohmann::json& obj, const char* key, const std::string& where, T& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      problems.push_back(fmt::format("{}: missing key '{}'", where, key));
      return false;
    }
    try {
      out = it->template get<T>();
      return true;
    } catch (const nlohmann::json::exception&) {
      problems.push_back(fmt::format("{}: bad value for '{}'", where, key));
      return false;
    }
  }

  const nlohmann::json* array(const nlohmann::json& root, const char* key) {
    const auto it = root.find(key);
    if (it == root.end()) {
      problems.push_back(fmt::format("missing key '{}'", key));
      return nullptr;
    }
    if (!it->is_array()) {
      problems.push_back(fmt::format("'{}' is not an array", key));
      return nullptr;
    }
    return &*it;
  }
};

}  // namespace detail

/// Parses and validates. Throws DataError listing every problem found.
inline Dataset from_json(const nlohmann::json& root) {
  if (!root.is_object()) throw DataError({"top level is not a JSON object"});
  detail::Reader rd;
  Dataset ds;
  for (const auto& [key, value] : root.items())
    if (key != "images" && key != "annotations" && key != "categories")
      rd.problems.push_back(fmt::format("unexpected top-level key '{}'", key));

  if (const auto* arr = rd.array(root, "images")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& e = (*arr)[i];
      const std::string where = fmt::format("images[{}]", i);
      Image im;
      if (!e.is_object()) {
        rd.problems.push_back(where + ": not an object");
        continue;
      }
      rd.field(e, "id", where, im.id);
      rd.field(e, "file_name", where, im.file_name);
      rd.field(e, "width", where, im.width);
      rd.field(e, "height", where, im.height);
      ds.images.push_back(std::move(im));
    }
  }
  if (const auto* arr = rd.array(root, "annotations")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& e = (*arr)[i];
      const std::string where = fmt::format("annotations[{}]", i);
      if (!e.is_object()) {
        rd.problems.push_back(where + ": not an object");
        continue;
      }
      Annotation a;
      rd.field(e, "id", where, a.id);
      rd.field(e, "image_id", where, a.image_id);
      rd.field(e, "category_id", where, a.category_id);
      rd.field(e, "bbox", where, a.bbox);
      rd.field(e, "area", where, a.area);
      rd.field(e, "iscrowd", where, a.iscrowd);
      nlohmann::json seg;
      if (rd.field(e, "segmentation", where, seg)) {
        if (!seg.is_object()) {
          rd.problems.push_back(where + ": segmentation is not an RLE object");
        } else {
          std::array<int, 2> size{};
          if (rd.field(seg, "size", where + ".segmentation", size)) {
            a.segmentation.height = size[0];
            a.segmentation.width = size[1];
          }
          rd.field(seg, "counts", where + ".segmentation", a.segmentation.counts);
        }
      }
      ds.annotations.push_back(std::move(a));
    }
  }
  if (const auto* arr = rd.array(root, "categories")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& e = (*arr)[i];
      const std::string where = fmt::format("categories[{}]", i);
      if (!e.is_object()) {
        rd.problems.push_back(where + ": not an object");
        continue;
      }
      Category c;
      rd.field(e, "id", where, c.id);
      rd.field(e, "name", where, c.name);
      ds.categories.push_back(std::move(c));
    }
  }
  if (!rd.problems.empty()) throw DataError(std::move(rd.problems));
  if (auto rep = validate(ds); !rep.ok()) throw DataError(rep.lines());
  return ds;
}

inline Dataset parse(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError({std::string("malformed JSON: ") + e.what()});
  }
  return from_json(root);
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << dump(ds) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace lumaforge::coco
