#include <gtest/gtest.h>

#include <random>

#include "lumaforge/evalkit.hpp"
#include "support/oracles.hpp"

using namespace lumaforge;
using namespace lumaforge::eval;

namespace {

coco::Annotation box_annotation(std::int64_t id, std::int64_t image, std::int64_t cat,
                                Box b) {
  coco::Annotation a;
  a.id = id;
  a.image_id = image;
  a.category_id = cat;
  a.bbox = b;
  return a;
}

// Evaluation only reads ids and boxes, so the fixtures skip segmentations.
coco::Dataset box_dataset(int images, std::vector<std::int64_t> cats,
                          const std::vector<oracle::Gt>& gts) {
  coco::Dataset ds;
  for (int i = 1; i <= images; ++i) ds.images.push_back({i, "x.png", 100, 100});
  for (auto c : cats) ds.categories.push_back({c, coco::default_category_name(c)});
  std::int64_t id = 1;
  for (const auto& g : gts) ds.annotations.push_back(box_annotation(id++, g.image, g.category, g.box));
  return ds;
}

std::vector<Detection> to_dets(const std::vector<oracle::Det>& ds) {
  std::vector<Detection> out;
  for (const auto& d : ds) out.push_back({d.image, d.category, d.box, d.score});
  return out;
}

}  // namespace

TEST(BboxIou, Examples) {
  EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 10, 10}, {20, 0, 10, 10}), 0.0);
  EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 10, 10}, {10, 0, 10, 10}), 0.0);
  EXPECT_DOUBLE_EQ(bbox_iou({0, 0, 10, 10}, {5, 0, 10, 10}), 50.0 / 150.0);
}

TEST(Match, SingleGoodDetection) {
  const std::vector<Detection> d{{1, 1, {0, 0, 10, 10}, 0.5}};
  const std::vector<Box> g{{0, 0, 10, 9}};
  const auto m = match_detections(d, g, 0.5);
  EXPECT_EQ(m.true_positives(), 1u);
}

TEST(Match, DuplicateDetectionIsFalsePositive) {
  const std::vector<Detection> d{{1, 1, {0, 0, 10, 10}, 0.4}, {1, 1, {0, 0, 10, 10}, 0.9}};
  const std::vector<Box> g{{0, 0, 10, 10}};
  const auto m = match_detections(d, g, 0.5);
  ASSERT_EQ(m.order, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(m.det_to_gt, (std::vector<int>{0, -1}));
}

TEST(Match, EqualScoresKeepInputOrder) {
  const std::vector<Detection> d{{1, 1, {0, 0, 10, 10}, 0.5}, {1, 1, {0, 0, 10, 10}, 0.5}};
  const std::vector<Box> g{{0, 0, 10, 10}};
  const auto m = match_detections(d, g, 0.5);
  EXPECT_EQ(m.order, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(m.det_to_gt, (std::vector<int>{0, -1}));
}

TEST(Match, AgreesWithGreedyOracleOnRandomConfigs) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> pos(0, 8), ext(2, 8);
  std::uniform_int_distribution<int> sc(0, 4);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<Detection> d(3);
    std::vector<Box> g(2);
    for (auto& x : d)
      x = {1, 1, {double(pos(gen)), double(pos(gen)), double(ext(gen)), double(ext(gen))},
           sc(gen) / 4.0};
    for (auto& b : g) b = {double(pos(gen)), double(pos(gen)), double(ext(gen)), double(ext(gen))};
    const auto m = match_detections(d, g, 0.5);
    // oracle: walk scores from high to low over the raw list
    std::vector<bool> used(d.size(), false), taken(g.size(), false);
    std::vector<int> expect_gt_of_det(d.size(), -1);
    for (std::size_t step = 0; step < d.size(); ++step) {
      int pick = -1;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!used[i] && (pick < 0 || d[i].score > d[pick].score)) pick = static_cast<int>(i);
      used[pick] = true;
      double best = -1;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double v = oracle::iou(d[pick].bbox, g[k]);
        if (!taken[k] && v >= 0.5 && v > best) {
          best = v;
          expect_gt_of_det[pick] = static_cast<int>(k);
        }
      }
      if (expect_gt_of_det[pick] >= 0) taken[expect_gt_of_det[pick]] = true;
    }
    for (std::size_t r = 0; r < m.order.size(); ++r)
      ASSERT_EQ(m.det_to_gt[r], expect_gt_of_det[m.order[r]]) << trial;
  }
}

TEST(AveragePrecision, HandEnumeratedCurve) {
  const auto pr = average_precision({true, false, true}, 2);
  EXPECT_NEAR(pr.ap, (51.0 + 50.0 * 2.0 / 3.0) / 101.0, 1e-12);
  EXPECT_NEAR(pr.ap, 0.835, 5e-4);
  EXPECT_DOUBLE_EQ(pr.recall, 1.0);
  EXPECT_DOUBLE_EQ(average_precision({true}, 1).ap, 1.0);
  EXPECT_DOUBLE_EQ(average_precision({}, 3).ap, 0.0);
  EXPECT_DOUBLE_EQ(average_precision({false, false}, 3).recall, 0.0);
}

TEST(Evaluate, HandCaseThroughTheFullPath) {
  // 2 gts; TP at .9, FP at .8, TP at .7. Boxes identical to gts so every
  // IoU threshold sees the same curve.
  const auto ds = box_dataset(1, {1}, {{1, 1, {0, 0, 10, 10}}, {1, 1, {50, 50, 10, 10}}});
  const std::vector<Detection> dets{{1, 1, {0, 0, 10, 10}, 0.9},
                                    {1, 1, {80, 80, 10, 10}, 0.8},
                                    {1, 1, {50, 50, 10, 10}, 0.7}};
  const auto rep = evaluate(ds, dets);
  EXPECT_NEAR(rep.mean_ap, (51.0 + 50.0 * 2.0 / 3.0) / 101.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.mean_ar, 1.0);
}

TEST(Evaluate, PerfectAndEmpty) {
  const auto ds = box_dataset(2, {1, 2, 3},
                              {{1, 1, {0, 0, 10, 10}}, {2, 2, {5, 5, 20, 30}}, {2, 1, {1, 1, 4, 4}}});
  const auto perfect = evaluate(ds, ground_truth_as_detections(ds));
  EXPECT_DOUBLE_EQ(perfect.mean_ap, 1.0);
  EXPECT_DOUBLE_EQ(perfect.mean_ar, 1.0);
  EXPECT_FALSE(perfect.categories[2].present);

  const auto none = evaluate(ds, std::vector<Detection>{});
  EXPECT_DOUBLE_EQ(none.mean_ap, 0.0);
  EXPECT_DOUBLE_EQ(none.mean_ar, 0.0);

  const auto empty_ds = evaluate(coco::Dataset{}, std::vector<Detection>{});
  EXPECT_DOUBLE_EQ(empty_ds.mean_ap, 0.0);
}

TEST(Evaluate, UnknownIdsAreExcluded) {
  const auto ds = box_dataset(1, {1}, {{1, 1, {0, 0, 10, 10}}});
  const std::vector<Detection> dets{{1, 1, {0, 0, 10, 10}, 0.9},
                                    {7, 1, {0, 0, 10, 10}, 0.95},
                                    {1, 5, {0, 0, 10, 10}, 0.95}};
  const auto rep = evaluate(ds, dets);
  ASSERT_EQ(rep.excluded.size(), 2u);
  EXPECT_EQ(rep.excluded[0].index, 1u);
  EXPECT_EQ(rep.excluded[1].index, 2u);
  EXPECT_DOUBLE_EQ(rep.mean_ap, 1.0);
}

TEST(Evaluate, MaxDetsKeepsBestScores) {
  const auto ds = box_dataset(1, {1}, {{1, 1, {0, 0, 10, 10}}});
  std::vector<Detection> dets;
  for (int i = 0; i < 5; ++i) dets.push_back({1, 1, {60, 60, 5, 5}, 0.9});
  dets.push_back({1, 1, {0, 0, 10, 10}, 0.1});
  EvalSettings s;
  s.max_dets = 5;
  EXPECT_DOUBLE_EQ(evaluate(ds, dets, s).mean_ar, 0.0);
  s.max_dets = 6;
  EXPECT_DOUBLE_EQ(evaluate(ds, dets, s).mean_ar, 1.0);
}

namespace {

struct RandomInstance {
  std::vector<oracle::Gt> gts;
  std::vector<oracle::Det> dets;
};

RandomInstance random_instance(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> n_gt(0, 3), n_det(0, 5), img(1, 3), cat(1, 2);
  std::uniform_int_distribution<int> pos(0, 12), ext(3, 10), score(0, 6);
  auto box = [&] {
    return std::array<double, 4>{double(pos(gen)), double(pos(gen)), double(ext(gen)),
                                 double(ext(gen))};
  };
  RandomInstance r;
  const int g = n_gt(gen), d = n_det(gen);
  for (int i = 0; i < g; ++i) r.gts.push_back({img(gen), cat(gen), box()});
  for (int i = 0; i < d; ++i) {
    // Half the detections are jittered copies of a gt so matches happen.
    if (!r.gts.empty() && gen() % 2) {
      const auto& t = r.gts[gen() % r.gts.size()];
      auto b = t.box;
      b[0] += double(int(gen() % 3) - 1);
      b[3] += double(int(gen() % 3));
      r.dets.push_back({t.image, t.category, b, score(gen) / 6.0});
    } else {
      r.dets.push_back({img(gen), cat(gen), box(), score(gen) / 6.0});
    }
  }
  return r;
}

}  // namespace

TEST(Evaluate, AgreesWithBruteForceOracle) {
  std::mt19937_64 gen(1234);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto inst = random_instance(gen);
    const auto ds = box_dataset(3, {1, 2}, inst.gts);
    const auto rep = evaluate(ds, to_dets(inst.dets));
    const auto ref = oracle::evaluate(inst.dets, inst.gts, {1, 2});
    ASSERT_NEAR(rep.mean_ap, ref.mean_ap, 1e-9) << trial;
    ASSERT_NEAR(rep.mean_ar, ref.mean_ar, 1e-9) << trial;
  }
}

TEST(Evaluate, RemovingFalsePositiveNeverHurts) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 1500; ++trial) {
    const auto inst = random_instance(gen);
    const auto ds = box_dataset(3, {1, 2}, inst.gts);
    const auto dets = to_dets(inst.dets);
    const auto base = evaluate(ds, dets);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      // a detection that matches nothing at the loosest threshold is a FP everywhere
      bool overlaps = false;
      for (const auto& g : inst.gts)
        overlaps |= g.image == dets[i].image_id && g.category == dets[i].category_id &&
                    bbox_iou(dets[i].bbox, g.box) >= 0.5;
      if (overlaps) continue;
      auto fewer = dets;
      fewer.erase(fewer.begin() + static_cast<std::ptrdiff_t>(i));
      const auto r = evaluate(ds, fewer);
      ASSERT_GE(r.mean_ap + 1e-12, base.mean_ap);
      ASSERT_GE(r.mean_ar + 1e-12, base.mean_ar);
    }
  }
}

TEST(Evaluate, ScoreScalingLeavesMetricsUnchanged) {
  std::mt19937_64 gen(78);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(gen);
    const auto ds = box_dataset(3, {1, 2}, inst.gts);
    auto dets = to_dets(inst.dets);
    const auto base = evaluate(ds, dets);
    for (auto& d : dets) d.score *= 0.25;
    const auto scaled = evaluate(ds, dets);
    ASSERT_DOUBLE_EQ(base.mean_ap, scaled.mean_ap);
    ASSERT_DOUBLE_EQ(base.mean_ar, scaled.mean_ar);
  }
}

TEST(ParseDetections, GoodAndBad) {
  const auto d = parse_detections(
      R"([{"image_id":1,"category_id":2,"bbox":[1,2,3,4],"score":0.5}])");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].bbox, (Box{1, 2, 3, 4}));
  EXPECT_EQ(parse_detections(detections_to_json(d).dump()).size(), 1u);
  EXPECT_THROW(parse_detections("{"), DataError);
  EXPECT_THROW(parse_detections("{}"), DataError);
  EXPECT_THROW(parse_detections(R"([{"image_id":1}])"), DataError);
  EXPECT_THROW(parse_detections(R"([{"image_id":1,"category_id":2,"bbox":[1,2,0,4],"score":0.5}])"),
               DataError);
  EXPECT_THROW(parse_detections(R"([{"image_id":1,"category_id":2,"bbox":[1,2,3,4],"score":1.5}])"),
               DataError);
}

TEST(Report, TableAndJson) {
  const auto ds = box_dataset(1, {1, 2}, {{1, 1, {0, 0, 10, 10}}});
  const auto rep = evaluate(ds, ground_truth_as_detections(ds));
  const std::string table = format_table(rep);
  EXPECT_NE(table.find("002_master_chef_can"), std::string::npos);
  EXPECT_NE(table.find("1.0000"), std::string::npos);
  const auto j = to_json(rep);
  EXPECT_DOUBLE_EQ(j["mean_ap"].get<double>(), 1.0);
  EXPECT_FALSE(j["categories"][1]["present"].get<bool>());
  EXPECT_EQ(j["settings"]["max_dets"].get<int>(), 100);
}
