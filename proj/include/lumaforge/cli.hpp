#pragma once

// `lumaforge` command line: harvest, compose, eval, inspect.
//
// Exit codes: 0 ok, 1 I/O or configuration error, 2 empty result.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "lumaforge/cocoio.hpp"
#include "lumaforge/compositor.hpp"
#include "lumaforge/error.hpp"
#include "lumaforge/evalkit.hpp"
#include "lumaforge/harvest.hpp"
#include "lumaforge/parallel.hpp"
#include "lumaforge/raster_io.hpp"

namespace lumaforge::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitEmpty = 2;

// ---------------------------------------------------------------------------
// Configuration. Defaults come from the default-constructed config structs;
// the *_to_json functions are the single place they are rendered from.

inline ojson harvest_config_to_json(const harvest::HarvestConfig& c) {
  ojson j;
  j["mode"] = keying::to_string(c.key.mode);
  if (c.key.threshold)
    j["threshold"] = *c.key.threshold;
  else
    j["threshold"] = "auto";
  j["key_hue"] = c.key.key_hue;
  j["hue_tolerance"] = c.key.hue_tolerance;
  j["min_saturation"] = c.key.min_saturation;
  j["min_value"] = c.key.min_value;
  j["frame_stride"] = c.frame_stride;
  j["margin"] = c.margin;
  if (c.min_area)
    j["min_area"] = *c.min_area;
  else
    j["min_area"] = nullptr;
  j["min_area_fraction"] = c.min_area_fraction;
  j["crop_padding"] = c.crop_padding;
  j["connectivity"] = static_cast<int>(c.connectivity);
  return j;
}

struct ComposeConfig {
  compose::SceneSpec spec;
  std::size_t count = 100;
  std::map<std::int64_t, std::string> categories;
};

inline ojson compose_config_to_json(const ComposeConfig& c) {
  const auto& s = c.spec;
  ojson j;
  j["canvas_width"] = s.canvas_width;
  j["canvas_height"] = s.canvas_height;
  j["objects_min"] = s.objects_min;
  j["objects_max"] = s.objects_max;
  j["max_overlap"] = s.max_overlap;
  j["scale_min"] = s.scale_min;
  j["scale_max"] = s.scale_max;
  j["rotation_min"] = s.rotation_min;
  j["rotation_max"] = s.rotation_max;
  j["max_placement_attempts"] = s.max_placement_attempts;
  j["erosion_radius"] = s.erosion_radius;
  j["noise_sigma"] = s.noise_sigma;
  j["seed"] = s.seed;
  j["count"] = c.count;
  auto& cats = j["categories"] = ojson::object();
  for (const auto& [id, name] : c.categories) cats[std::to_string(id)] = name;
  return j;
}

namespace detail {

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
}

inline void reject_unknown_keys(const nlohmann::json& cfg, const ojson& known,
                                const std::string& what) {
  if (!cfg.is_object()) throw ConfigError(what + " config must be a JSON object");
  std::vector<std::string> unknown;
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (!known.contains(it.key())) unknown.push_back(it.key());
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown " + what + " config key(s): " + list);
  }
}

template <typename T>
void take(const nlohmann::json& cfg, const char* key, T& out) {
  if (!cfg.contains(key)) return;
  try {
    out = cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

}  // namespace detail

inline harvest::HarvestConfig harvest_config_from_json(const nlohmann::json& cfg) {
  harvest::HarvestConfig c;
  detail::reject_unknown_keys(cfg, harvest_config_to_json(c), "harvest");
  if (cfg.contains("mode")) {
    std::string mode;
    detail::take(cfg, "mode", mode);
    c.key.mode = keying::key_mode_from_string(mode);
  }
  if (cfg.contains("threshold")) {
    const auto& t = cfg["threshold"];
    if (t.is_string() && t.get<std::string>() == "auto")
      c.key.threshold.reset();
    else if (t.is_number_integer())
      c.key.threshold = t.get<int>();
    else
      throw ConfigError("threshold must be \"auto\" or an integer");
  }
  detail::take(cfg, "key_hue", c.key.key_hue);
  detail::take(cfg, "hue_tolerance", c.key.hue_tolerance);
  detail::take(cfg, "min_saturation", c.key.min_saturation);
  detail::take(cfg, "min_value", c.key.min_value);
  detail::take(cfg, "frame_stride", c.frame_stride);
  detail::take(cfg, "margin", c.margin);
  if (cfg.contains("min_area")) {
    if (cfg["min_area"].is_null())
      c.min_area.reset();
    else {
      std::size_t v = 0;
      detail::take(cfg, "min_area", v);
      c.min_area = v;
    }
  }
  detail::take(cfg, "min_area_fraction", c.min_area_fraction);
  detail::take(cfg, "crop_padding", c.crop_padding);
  if (cfg.contains("connectivity")) {
    int conn = 8;
    detail::take(cfg, "connectivity", conn);
    c.connectivity = connectivity_from_int(conn);
  }
  c.validate();
  return c;
}

inline ComposeConfig compose_config_from_json(const nlohmann::json& cfg) {
  ComposeConfig c;
  detail::reject_unknown_keys(cfg, compose_config_to_json(c), "compose");
  auto& s = c.spec;
  detail::take(cfg, "canvas_width", s.canvas_width);
  detail::take(cfg, "canvas_height", s.canvas_height);
  detail::take(cfg, "objects_min", s.objects_min);
  detail::take(cfg, "objects_max", s.objects_max);
  detail::take(cfg, "max_overlap", s.max_overlap);
  detail::take(cfg, "scale_min", s.scale_min);
  detail::take(cfg, "scale_max", s.scale_max);
  detail::take(cfg, "rotation_min", s.rotation_min);
  detail::take(cfg, "rotation_max", s.rotation_max);
  detail::take(cfg, "max_placement_attempts", s.max_placement_attempts);
  detail::take(cfg, "erosion_radius", s.erosion_radius);
  detail::take(cfg, "noise_sigma", s.noise_sigma);
  detail::take(cfg, "seed", s.seed);
  detail::take(cfg, "count", c.count);
  if (cfg.contains("categories")) {
    const auto& cats = cfg["categories"];
    if (!cats.is_object()) throw ConfigError("categories must map id strings to names");
    for (auto it = cats.begin(); it != cats.end(); ++it) {
      std::int64_t id = 0;
      try {
        id = std::stoll(it.key());
      } catch (...) {
        throw ConfigError("category key '" + it.key() + "' is not an integer id");
      }
      if (!it.value().is_string()) throw ConfigError("category names must be strings");
      c.categories[id] = it.value().get<std::string>();
    }
  }
  s.validate();
  return c;
}

inline std::string defaults_footer(const ojson& defaults) {
  std::string out = "Config keys (JSON file via --config) and defaults:\n";
  for (auto it = defaults.begin(); it != defaults.end(); ++it)
    out += fmt::format("  {:<24} {}\n", it.key(), it.value().dump());
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct HarvestArgs {
  fs::path input;
  int category = 1;
  fs::path out;
  std::optional<fs::path> config;
  int jobs = 1;
};

inline int cmd_harvest(const HarvestArgs& a, Streams io) {
  harvest::HarvestConfig cfg =
      a.config ? harvest_config_from_json(detail::read_json_file(*a.config))
               : harvest::HarvestConfig{};
  cfg.jobs = a.jobs;
  io.err << "harvest config: " << harvest_config_to_json(cfg).dump() << '\n';
  try {
    auto result = harvest::harvest_directory(a.input, a.category, cfg);
    harvest::save_library(result.crops, a.out);
    const auto report = result.report.to_json();
    std::ofstream(a.out / "harvest_report.json") << report.dump(2) << '\n';
    io.out << fmt::format("sampled {} accepted {} rejected_border {} rejected_area {}\n",
                          result.report.sampled, result.report.accepted,
                          result.report.rejected_border, result.report.rejected_area);
    io.out << "wrote " << (a.out / harvest::kManifestName).string() << '\n';
    return kExitOk;
  } catch (const harvest::NoAcceptedFrames& e) {
    io.err << "error: " << e.what() << '\n';
    io.out << e.report().to_json().dump(2) << '\n';
    return kExitEmpty;
  }
}

struct ComposeArgs {
  std::vector<fs::path> libraries;
  fs::path backgrounds;
  fs::path out;
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count;
  int jobs = 1;
};

inline int cmd_compose(const ComposeArgs& a, Streams io) {
  ComposeConfig cfg = a.config ? compose_config_from_json(detail::read_json_file(*a.config))
                               : ComposeConfig{};
  if (a.seed) cfg.spec.seed = *a.seed;
  if (a.count) cfg.count = *a.count;
  io.err << "compose config: " << compose_config_to_json(cfg).dump() << '\n';

  std::vector<harvest::CropRecord> library;
  for (const auto& dir : a.libraries) {
    auto part = harvest::load_library(dir);
    std::move(part.begin(), part.end(), std::back_inserter(library));
  }
  if (library.empty()) throw ConfigError("the crop libraries contain no records");

  compose::BackgroundPool pool(a.backgrounds);
  if (cfg.count > 0) {
    if (pool.size() == 0) throw IoError("no PNG/JPEG backgrounds in " + a.backgrounds.string());
    pool.require_at_least(cfg.spec.canvas_width, cfg.spec.canvas_height);
  }

  std::error_code ec;
  fs::create_directories(a.out / "images", ec);
  if (ec) throw IoError("cannot create " + (a.out / "images").string() + ": " + ec.message());

  compose::ComposeOptions opts;
  opts.jobs = a.jobs;
  opts.category_names = cfg.categories;
  opts.keep_images = false;
  opts.on_scene = [&](const compose::ComposedScene& scene) {
    write_png(a.out / scene.file_name, scene.image);
  };
  const auto result = compose::compose_dataset(library, pool, cfg.spec, cfg.count, opts);

  coco::write_dataset(result.dataset, a.out / "annotations.json");
  {
    std::ofstream log(a.out / "scene_log.json", std::ios::trunc);
    if (!log) throw IoError("cannot write scene_log.json");
    log << compose::scene_log_json(result.log).dump(2) << '\n';
  }

  const auto report = coco::validate(result.dataset);
  if (!report.ok()) {
    for (const auto& line : report.lines()) io.err << "validation: " << line << '\n';
    return kExitError;
  }
  io.out << fmt::format("composed {} images, {} annotations -> {}\n",
                        result.dataset.images.size(), result.dataset.annotations.size(),
                        (a.out / "annotations.json").string());
  return kExitOk;
}

struct EvalArgs {
  fs::path gt;
  fs::path dets;
  std::optional<fs::path> report;
};

inline int cmd_eval(const EvalArgs& a, Streams io) {
  const auto ds = coco::read_dataset(a.gt);
  std::ifstream in(a.dets, std::ios::binary);
  if (!in) throw IoError("cannot open " + a.dets.string());
  std::ostringstream text;
  text << in.rdbuf();
  const auto dets = eval::parse_detections(text.str());
  const auto rep = eval::evaluate(ds, dets);
  io.out << eval::format_table(rep);
  if (a.report) {
    std::ofstream out(*a.report, std::ios::trunc);
    if (!out) throw IoError("cannot write " + a.report->string());
    out << eval::to_json(rep).dump(2) << '\n';
  }
  return kExitOk;
}

inline const std::array<Rgb, 8>& overlay_palette() {
  static const std::array<Rgb, 8> kPalette{{{230, 25, 75},
                                            {60, 180, 75},
                                            {255, 225, 25},
                                            {0, 130, 200},
                                            {245, 130, 48},
                                            {145, 30, 180},
                                            {70, 240, 240},
                                            {240, 50, 230}}};
  return kPalette;
}

/// Averages each annotated pixel with its instance colour; other pixels are
/// left as they are.
inline ImageRGB8 render_overlay(const ImageRGB8& image,
                                const std::vector<const coco::Annotation*>& anns) {
  ImageRGB8 out = image;
  for (std::size_t k = 0; k < anns.size(); ++k) {
    const Rgb tint = overlay_palette()[k % overlay_palette().size()];
    const BitMask m = coco::decode_rle(anns[k]->segmentation);
    if (m.width() != image.width() || m.height() != image.height())
      throw DataError({fmt::format("annotation {} does not match its image size", anns[k]->id)});
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        if (!m.get(x, y)) continue;
        const Rgb p = out.at(x, y);
        out.set(x, y,
                {static_cast<std::uint8_t>((p.r + tint.r) / 2),
                 static_cast<std::uint8_t>((p.g + tint.g) / 2),
                 static_cast<std::uint8_t>((p.b + tint.b) / 2)});
      }
  }
  return out;
}

struct InspectArgs {
  fs::path dataset;
  std::size_t n = 4;
};

inline int cmd_inspect(const InspectArgs& a, Streams io) {
  const auto ds = coco::read_dataset(a.dataset / "annotations.json");
  const std::size_t k = std::min(a.n, ds.images.size());
  if (k == 0) return kExitOk;
  const fs::path out_dir = a.dataset / "inspect";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < k; ++i) {
    const auto& im = ds.images[i];
    std::vector<const coco::Annotation*> anns;
    for (const auto& an : ds.annotations)
      if (an.image_id == im.id) anns.push_back(&an);
    const auto overlay = render_overlay(read_image(a.dataset / im.file_name), anns);
    const auto path = out_dir / fmt::format("overlay_{:06d}.png", im.id);
    write_png(path, overlay);
    io.out << "wrote " << path.string() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  Streams io{out, err};
  CLI::App app{"lumaforge: keyed recordings to annotated COCO detection datasets"};
  app.require_subcommand(1);
  app.fallthrough();
  int jobs = default_jobs();
  app.add_option("--jobs", jobs, "Worker threads (fallback: LUMAFORGE_JOBS, else 1)")
      ->check(CLI::PositiveNumber);

  HarvestArgs h;
  std::string h_config;
  auto* harvest = app.add_subcommand("harvest", "Key a frame directory into a crop library");
  harvest->add_option("--input", h.input, "Directory of frames (PNG/JPEG)")->required();
  harvest->add_option("--category", h.category, "Category id of the recorded object")
      ->required()
      ->check(CLI::PositiveNumber);
  harvest->add_option("--out", h.out, "Output library directory")->required();
  harvest->add_option("--config", h_config, "JSON config file");
  harvest->footer(defaults_footer(harvest_config_to_json({})));

  ComposeArgs c;
  std::string c_config;
  std::uint64_t c_seed = 0;
  std::size_t c_count = 0;
  auto* compose = app.add_subcommand("compose", "Synthesize an annotated scene dataset");
  compose->add_option("--library", c.libraries, "Crop library directories")->required();
  compose->add_option("--backgrounds", c.backgrounds, "Directory of background photos")
      ->required();
  compose->add_option("--out", c.out, "Output dataset directory")->required();
  compose->add_option("--config", c_config, "JSON config file");
  auto* seed_opt = compose->add_option("--seed", c_seed, "RNG seed (overrides config)");
  auto* count_opt = compose->add_option("--count", c_count, "Number of images (overrides config)");
  compose->footer(defaults_footer(compose_config_to_json({})));

  EvalArgs e;
  std::string e_report;
  auto* evalc = app.add_subcommand("eval", "COCO AP/AR of detections against a dataset");
  evalc->add_option("--gt", e.gt, "Ground-truth annotations.json")->required();
  evalc->add_option("--dets", e.dets, "Detections (COCO results JSON array)")->required();
  evalc->add_option("--report", e_report, "Also write the report as JSON here");

  InspectArgs in;
  auto* inspect = app.add_subcommand("inspect", "Render mask overlays for the first K images");
  inspect->add_option("--dataset", in.dataset, "Dataset directory (annotations.json + images/)")
      ->required();
  inspect->add_option("--n", in.n, "Number of overlays")->required();

  std::vector<const char*> argv{"lumaforge"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (harvest->parsed()) {
      if (!h_config.empty()) h.config = h_config;
      h.jobs = jobs;
      return cmd_harvest(h, io);
    }
    if (compose->parsed()) {
      if (!c_config.empty()) c.config = c_config;
      if (seed_opt->count()) c.seed = c_seed;
      if (count_opt->count()) c.count = c_count;
      c.jobs = jobs;
      return cmd_compose(c, io);
    }
    if (evalc->parsed()) {
      if (!e_report.empty()) e.report = e_report;
      return cmd_eval(e, io);
    }
    if (inspect->parsed()) return cmd_inspect(in, io);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace lumaforge::cli
