#pragma once

// COCO-protocol bounding-box AP/AR.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "lumaforge/cocoio.hpp"
#include "lumaforge/error.hpp"

namespace lumaforge::eval {

using Box = std::array<double, 4>;  // x, y, w, h

struct Detection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  Box bbox{};
  double score = 0;
};

inline double bbox_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a[0] + a[2], b[0] + b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[1] + a[3], b[1] + b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Indices of `dets` by descending score, input order on ties.
inline std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

struct Matching {
  std::vector<std::size_t> order;  // detection indices, best score first
  std::vector<int> det_to_gt;      // per entry of `order`: matched gt or -1
  std::vector<int> gt_to_det;      // per gt: index into `order` or -1

  std::size_t true_positives() const {
    return static_cast<std::size_t>(
        std::count_if(det_to_gt.begin(), det_to_gt.end(), [](int g) { return g >= 0; }));
  }
};

/// Greedy matching for one image+category cell: each detection, best score
/// first, takes the still-unmatched ground truth of highest IoU >= iou_thr
/// (lowest index on equal IoU).
inline Matching match_detections(std::span<const Detection> dets, std::span<const Box> gts,
                                 double iou_thr) {
  Matching m;
  m.order = score_order(dets);
  m.det_to_gt.assign(m.order.size(), -1);
  m.gt_to_det.assign(gts.size(), -1);
  for (std::size_t r = 0; r < m.order.size(); ++r) {
    const Box& d = dets[m.order[r]].bbox;
    int best = -1;
    double best_iou = iou_thr;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_to_det[g] >= 0) continue;
      const double iou = bbox_iou(d, gts[g]);
      if (iou < best_iou) continue;
      if (best >= 0 && iou == best_iou) continue;
      best = static_cast<int>(g);
      best_iou = iou;
    }
    if (best >= 0) {
      m.det_to_gt[r] = best;
      m.gt_to_det[static_cast<std::size_t>(best)] = static_cast<int>(r);
    }
  }
  return m;
}

/// Recall grid 0.00, 0.01, ..., 1.00, built the way the reference COCO tooling
/// builds it (k * 0.01, last point exactly 1).
inline const std::array<double, 101>& recall_grid() {
  static const std::array<double, 101> grid = [] {
    std::array<double, 101> g{};
    for (int k = 0; k < 101; ++k) g[k] = k * 0.01;
    g[100] = 1.0;
    return g;
  }();
  return grid;
}

inline std::vector<double> default_iou_thresholds() {
  return {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
}

struct PrSummary {
  double ap = 0;      // 101-point interpolated
  double recall = 0;  // final recall
};

/// AP and recall from detections ranked by score (true = matched) against
/// `num_gt` ground truths.
inline PrSummary average_precision(const std::vector<bool>& ranked_tp, std::size_t num_gt) {
  PrSummary out;
  if (num_gt == 0 || ranked_tp.empty()) return out;
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_tp[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0;
  for (const double r : recall_grid()) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  out.ap = sum / 101.0;
  out.recall = recall.back();
  return out;
}

struct EvalSettings {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  std::size_t max_dets = 100;  // per image and category
};

struct CategoryResult {
  std::int64_t id = 0;
  std::string name;
  bool present = false;  // has ground truth
  std::size_t num_gt = 0;
  std::size_t num_dets = 0;
  double ap = 0;    // mean over IoU thresholds
  double ap50 = 0;  // at IoU 0.50 (if in the sweep)
  double ap75 = 0;
  double ar = 0;
};

struct ExcludedDetection {
  std::size_t index = 0;  // position in the input list
  std::string reason;
};

struct EvalReport {
  std::vector<CategoryResult> categories;
  double mean_ap = 0;
  double mean_ap50 = 0;
  double mean_ap75 = 0;
  double mean_ar = 0;
  EvalSettings settings;
  std::vector<ExcludedDetection> excluded;
};

/// Scores `dets` against the dataset's boxes. Detections on unknown images or
/// categories are listed in `excluded` and ignored; categories without ground
/// truth are reported absent and left out of the means.
inline EvalReport evaluate(const coco::Dataset& ds, std::span<const Detection> dets,
                           const EvalSettings& settings = {}) {
  EvalReport rep;
  rep.settings = settings;

  std::set<std::int64_t> image_ids;
  for (const auto& im : ds.images) image_ids.insert(im.id);
  std::set<std::int64_t> cat_ids;
  for (const auto& c : ds.categories) cat_ids.insert(c.id);

  using Cell = std::pair<std::int64_t, std::int64_t>;  // image, category
  std::map<Cell, std::vector<Box>> gts;
  for (const auto& a : ds.annotations) gts[{a.image_id, a.category_id}].push_back(a.bbox);
  std::map<Cell, std::vector<Detection>> cell_dets;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    if (!image_ids.count(d.image_id)) {
      rep.excluded.push_back({i, fmt::format("unknown image_id {}", d.image_id)});
      continue;
    }
    if (!cat_ids.count(d.category_id)) {
      rep.excluded.push_back({i, fmt::format("unknown category_id {}", d.category_id)});
      continue;
    }
    cell_dets[{d.image_id, d.category_id}].push_back(d);
  }
  // Keep the best max_dets per cell.
  for (auto& [cell, list] : cell_dets) {
    const auto order = score_order(list);
    std::vector<Detection> kept;
    for (std::size_t r = 0; r < order.size() && r < settings.max_dets; ++r)
      kept.push_back(list[order[r]]);
    list = std::move(kept);
  }

  static const std::vector<Box> kNoBoxes;
  std::size_t present = 0;
  for (const auto& cat : ds.categories) {
    CategoryResult cr;
    cr.id = cat.id;
    cr.name = cat.name;
    for (const auto im : image_ids) {
      if (auto it = gts.find({im, cat.id}); it != gts.end()) cr.num_gt += it->second.size();
      if (auto it = cell_dets.find({im, cat.id}); it != cell_dets.end())
        cr.num_dets += it->second.size();
    }
    cr.present = cr.num_gt > 0;
    if (cr.present) {
      double ap_sum = 0, ar_sum = 0;
      for (const double thr : settings.iou_thresholds) {
        // Concatenate per-image ranked results in image-id order, then rank
        // globally (stable, so ties keep that order).
        std::vector<std::pair<double, bool>> scored;
        for (const auto im : image_ids) {
          const auto dit = cell_dets.find({im, cat.id});
          if (dit == cell_dets.end()) continue;
          const auto git = gts.find({im, cat.id});
          const auto& g = git == gts.end() ? kNoBoxes : git->second;
          const auto m = match_detections(dit->second, g, thr);
          for (std::size_t r = 0; r < m.order.size(); ++r)
            scored.emplace_back(dit->second[m.order[r]].score, m.det_to_gt[r] >= 0);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<bool> tp;
        tp.reserve(scored.size());
        for (const auto& s : scored) tp.push_back(s.second);
        const auto pr = average_precision(tp, cr.num_gt);
        ap_sum += pr.ap;
        ar_sum += pr.recall;
        if (std::abs(thr - 0.5) < 1e-12) cr.ap50 = pr.ap;
        if (std::abs(thr - 0.75) < 1e-12) cr.ap75 = pr.ap;
      }
      const double n = static_cast<double>(settings.iou_thresholds.size());
      cr.ap = ap_sum / n;
      cr.ar = ar_sum / n;
      ++present;
      rep.mean_ap += cr.ap;
      rep.mean_ap50 += cr.ap50;
      rep.mean_ap75 += cr.ap75;
      rep.mean_ar += cr.ar;
    }
    rep.categories.push_back(std::move(cr));
  }
  if (present > 0) {
    rep.mean_ap /= present;
    rep.mean_ap50 /= present;
    rep.mean_ap75 /= present;
    rep.mean_ar /= present;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Results files and report output

/// Parses a COCO results file (array of {image_id, category_id, bbox, score}).
inline std::vector<Detection> parse_detections(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError({std::string("malformed detections JSON: ") + e.what()});
  }
  if (!root.is_array()) throw DataError({"detections file must be a JSON array"});
  std::vector<Detection> out;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& e = root[i];
    try {
      Detection d;
      d.image_id = e.at("image_id").get<std::int64_t>();
      d.category_id = e.at("category_id").get<std::int64_t>();
      d.bbox = e.at("bbox").get<Box>();
      d.score = e.at("score").get<double>();
      if (!(d.bbox[2] > 0 && d.bbox[3] > 0))
        problems.push_back(fmt::format("detection {}: bbox width/height must be > 0", i));
      if (!(d.score >= 0 && d.score <= 1))
        problems.push_back(fmt::format("detection {}: score must be in [0, 1]", i));
      out.push_back(d);
    } catch (const nlohmann::json::exception& ex) {
      problems.push_back(fmt::format("detection {}: {}", i, ex.what()));
    }
  }
  if (!problems.empty()) throw DataError(std::move(problems));
  return out;
}

inline nlohmann::ordered_json detections_to_json(std::span<const Detection> dets) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : dets)
    arr.push_back({{"image_id", d.image_id},
                   {"category_id", d.category_id},
                   {"bbox", d.bbox},
                   {"score", d.score}});
  return arr;
}

/// Every ground-truth box as a detection with score 1.
inline std::vector<Detection> ground_truth_as_detections(const coco::Dataset& ds) {
  std::vector<Detection> out;
  for (const auto& a : ds.annotations) out.push_back({a.image_id, a.category_id, a.bbox, 1.0});
  return out;
}

inline nlohmann::ordered_json to_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["mean_ap"] = rep.mean_ap;
  j["mean_ap50"] = rep.mean_ap50;
  j["mean_ap75"] = rep.mean_ap75;
  j["mean_ar"] = rep.mean_ar;
  auto& cats = j["categories"] = nlohmann::ordered_json::array();
  for (const auto& c : rep.categories) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["name"] = c.name;
    e["present"] = c.present;
    e["num_gt"] = c.num_gt;
    e["num_dets"] = c.num_dets;
    if (c.present) {
      e["ap"] = c.ap;
      e["ap50"] = c.ap50;
      e["ap75"] = c.ap75;
      e["ar"] = c.ar;
    }
    cats.push_back(std::move(e));
  }
  j["settings"] = {{"iou_thresholds", rep.settings.iou_thresholds},
                   {"max_dets", rep.settings.max_dets}};
  auto& ex = j["excluded"] = nlohmann::ordered_json::array();
  for (const auto& e : rep.excluded) ex.push_back({{"index", e.index}, {"reason", e.reason}});
  return j;
}

inline std::string format_table(const EvalReport& rep) {
  std::size_t name_w = 8;
  for (const auto& c : rep.categories) name_w = std::max(name_w, c.name.size());
  std::ostringstream os;
  os << fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}  {:>6}  {:>5}  {:>5}\n", "category", name_w,
                    "AP", "AP50", "AP75", "AR", "gt", "dets");
  for (const auto& c : rep.categories) {
    if (c.present)
      os << fmt::format("{:<{}}  {:>6.4f}  {:>6.4f}  {:>6.4f}  {:>6.4f}  {:>5}  {:>5}\n", c.name,
                        name_w, c.ap, c.ap50, c.ap75, c.ar, c.num_gt, c.num_dets);
    else
      os << fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}  {:>6}  {:>5}  {:>5}\n", c.name, name_w,
                        "-", "-", "-", "-", c.num_gt, c.num_dets);
  }
  os << fmt::format("{:<{}}  {:>6.4f}  {:>6.4f}  {:>6.4f}  {:>6.4f}\n", "mean", name_w,
                    rep.mean_ap, rep.mean_ap50, rep.mean_ap75, rep.mean_ar);
  if (!rep.excluded.empty())
    os << fmt::format("{} detection(s) excluded (unknown image or category)\n",
                      rep.excluded.size());
  return os.str();
}

}  // namespace lumaforge::eval
