#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lumaforge/compositor.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace lumaforge;
using namespace lumaforge::compose;
using harvest::CropRecord;
using testsupport::TempDir;

namespace {

CropRecord full_crop(int w, int h) {
  CropRecord c;
  c.patch = testsupport::paint_textured(BitMask(w, h, true), {60, 90, 120}, {0, 0, 0});
  c.mask = BitMask(w, h, true);
  c.source_bbox = {0, 0, w, h};
  return c;
}

CropRecord from_mask(const BitMask& m) {
  CropRecord c;
  c.patch = testsupport::paint_textured(m, {60, 90, 120}, {0, 0, 0});
  c.mask = m;
  c.source_bbox = {0, 0, m.width(), m.height()};
  return c;
}

// Rotation by +90 degrees about the centre written as index arithmetic:
// out(i, j) = in(j, h - 1 - i) on a w x h input, output h x w.
template <typename Get>
void rotate90_oracle(int w, int h, Get get_in, auto set_out) {
  for (int j = 0; j < w; ++j)
    for (int i = 0; i < h; ++i) set_out(i, j, get_in(j, h - 1 - i));
}

SceneSpec small_spec(int canvas = 160) {
  SceneSpec s;
  s.canvas_width = s.canvas_height = canvas;
  return s;
}

std::vector<CropRecord> small_library() {
  return {testsupport::make_crop(40, 30, 1, {220, 40, 40}),
          testsupport::make_crop(24, 36, 2, {40, 220, 40}, false),
          testsupport::make_crop(30, 30, 3, {40, 40, 220})};
}

}  // namespace

TEST(DrawAffine, DegenerateRangesGiveIdentity) {
  SceneSpec s;
  s.scale_min = s.scale_max = 1.0;
  s.rotation_min = s.rotation_max = 0.0;
  Rng rng(1);
  const auto a = draw_affine(rng, s);
  EXPECT_EQ(a, AffineParams::make(1.0, 0.0));
}

TEST(DrawAffine, UniformScaleStatistics) {
  SceneSpec s;
  Rng rng(2);
  double lo = 10, hi = -10, sum = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = draw_affine(rng, s);
    lo = std::min(lo, a.scale);
    hi = std::max(hi, a.scale);
    sum += a.scale;
    ASSERT_GE(a.rotation, 0.0);
    ASSERT_LT(a.rotation, 360.0);
  }
  EXPECT_GE(lo, 0.5);
  EXPECT_LE(hi, 1.5);
  EXPECT_NEAR(sum / 10000, 1.0, 0.01);
}

TEST(DrawAffine, SameSeedSameSequence) {
  SceneSpec s;
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(draw_affine(a, s), draw_affine(b, s));
}

TEST(WarpCrop, IdentityIsBitExact) {
  const CropRecord c = full_crop(23, 17);
  const auto w = warp_crop(c, AffineParams::make(1.0, 0.0));
  EXPECT_EQ(w.patch, c.patch);
  EXPECT_EQ(w.mask, c.mask);

  // Mask touching every edge but not full: patch is zero off-mask already.
  std::mt19937_64 gen(4);
  BitMask m = testsupport::random_mask(19, 13, 0.6, gen);
  for (int x = 0; x < 19; ++x) m.set(x, 0), m.set(x, 12);
  for (int y = 0; y < 13; ++y) m.set(0, y), m.set(18, y);
  const CropRecord r = from_mask(m);
  const auto wr = warp_crop(r, AffineParams::make(1.0, 360.0));
  EXPECT_EQ(wr.patch, r.patch);
  EXPECT_EQ(wr.mask, r.mask);
}

TEST(WarpCrop, IdentityCropsPaddingToTightBox) {
  const CropRecord c = testsupport::make_crop(30, 20, 1, {100, 100, 100});
  const auto w = warp_crop(c, AffineParams::make(1.0, 0.0));
  const BBox tight = *mask_to_bbox(c.mask);
  EXPECT_EQ(w.mask, crop(c.mask, tight));
  EXPECT_EQ(w.patch, crop(c.patch, tight));
}

TEST(WarpCrop, QuarterTurnMatchesIndexRotation) {
  std::mt19937_64 gen(6);
  for (auto [w, h] : {std::pair{16, 16}, std::pair{21, 9}, std::pair{8, 30}}) {
    const CropRecord c = full_crop(w, h);
    const auto out = warp_crop(c, AffineParams::make(1.0, 90.0));
    ASSERT_EQ(out.mask.width(), h);
    ASSERT_EQ(out.mask.height(), w);
    ImageRGB8 expect(h, w);
    rotate90_oracle(w, h, [&](int x, int y) { return c.patch.at(x, y); },
                    [&](int x, int y, Rgb v) { expect.set(x, y, v); });
    EXPECT_EQ(out.patch, expect);
    EXPECT_EQ(out.mask.area(), c.mask.area());

    // Random interior mask: rotate, then the tight box of the result.
    const CropRecord r = from_mask(testsupport::random_blobs(w, h, 4, gen));
    const auto ro = warp_crop(r, AffineParams::make(1.0, 90.0));
    BitMask rot(h, w);
    rotate90_oracle(w, h, [&](int x, int y) { return r.mask.get(x, y); },
                    [&](int x, int y, bool v) { rot.set(x, y, v); });
    const auto b = oracle::tight_box(rot);
    ASSERT_TRUE(b.has_value());
    EXPECT_EQ(ro.mask, crop(rot, BBox{b->x, b->y, b->w, b->h}));
  }
}

TEST(WarpCrop, DoubleScaleQuadruplesArea) {
  const CropRecord c = testsupport::make_crop(40, 26, 1, {100, 100, 100});
  const BBox tight = *mask_to_bbox(c.mask);
  const auto w = warp_crop(c, AffineParams::make(2.0, 0.0));
  EXPECT_NEAR(w.mask.width(), 2 * tight.w, 2);
  EXPECT_NEAR(w.mask.height(), 2 * tight.h, 2);
  const double ratio = static_cast<double>(w.mask.area()) / static_cast<double>(c.mask.area());
  EXPECT_NEAR(ratio, 4.0, 0.08);
}

TEST(WarpCrop, ArbitraryAngleKeepsAreaAndThrowsWhenVanished) {
  const CropRecord c = testsupport::make_crop(50, 30, 1, {100, 100, 100});
  for (double deg : {17.0, 45.0, 133.0, 271.5}) {
    const auto w = warp_crop(c, AffineParams::make(1.0, deg));
    EXPECT_NEAR(static_cast<double>(w.mask.area()) / c.mask.area(), 1.0, 0.05) << deg;
    EXPECT_TRUE(mask_to_bbox(w.mask) == (BBox{0, 0, w.mask.width(), w.mask.height()}));
  }
  BitMask dot(9, 9);
  dot.set(0, 0);
  EXPECT_THROW(warp_crop(from_mask(dot), AffineParams::make(0.05, 0.0)), DegenerateWarp);
}

TEST(OverlapFraction, Examples) {
  const BitMask a = testsupport::rect_mask(60, 60, 0, 0, 10, 10);
  EXPECT_DOUBLE_EQ(overlap_fraction(a, testsupport::rect_mask(60, 60, 30, 30, 10, 10)), 0.0);
  EXPECT_DOUBLE_EQ(overlap_fraction(a, a), 1.0);
  // shares the 10x5 strip y in [5, 10)
  const BitMask big = testsupport::rect_mask(60, 60, 0, 5, 20, 20);
  EXPECT_DOUBLE_EQ(overlap_fraction(a, big), 0.5);
  EXPECT_DOUBLE_EQ(overlap_fraction(big, a), 0.5);
  EXPECT_DOUBLE_EQ(overlap_fraction(BitMask(60, 60), a), 0.0);
}

TEST(PlaceInstances, OversizedCropIsSkipped) {
  SceneSpec s;
  s.objects_min = s.objects_max = 1;
  s.scale_min = s.scale_max = 1.0;
  s.rotation_min = s.rotation_max = 0.0;
  Rng rng(5);
  const auto p = place_instances(rng, {full_crop(600, 600)}, s);
  EXPECT_TRUE(p.instances.empty());
  ASSERT_EQ(p.skips.size(), 1u);
  EXPECT_NE(p.skips[0].reason.find("does not fit"), std::string::npos);
}

TEST(PlaceInstances, ZeroOverlapGivesDisjointMasks) {
  SceneSpec s = small_spec(400);
  s.max_overlap = 0.0;
  s.objects_min = s.objects_max = 2;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto p = place_instances(rng, {full_crop(100, 100), full_crop(100, 100)}, s);
    for (std::size_t i = 0; i < p.instances.size(); ++i)
      for (std::size_t j = i + 1; j < p.instances.size(); ++j)
        ASSERT_EQ(intersection_area(p.instances[i].full_mask, p.instances[j].full_mask), 0u);
  }
}

TEST(PlaceInstances, LayoutInvariants) {
  const auto lib = small_library();
  const SceneSpec s = small_spec();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto p = place_instances(rng, lib, s);
    ASSERT_EQ(static_cast<int>(p.instances.size() + p.skips.size()), p.requested);
    ASSERT_GE(p.requested, s.objects_min);
    ASSERT_LE(p.requested, s.objects_max);
    BitMask uni(s.canvas_width, s.canvas_height), vis_uni(s.canvas_width, s.canvas_height);
    for (std::size_t i = 0; i < p.instances.size(); ++i) {
      const auto& a = p.instances[i];
      ASSERT_EQ(a.z_order, static_cast<int>(i));
      ASSERT_TRUE(a.footprint.inside(s.canvas_width, s.canvas_height));
      ASSERT_EQ(a.full_mask.area(), a.full_area);
      ASSERT_EQ(a.category_id, lib[a.crop_ref].category_id);
      for (std::size_t k = 0; k < a.full_mask.size(); ++k) {
        ASSERT_LE(a.visible_mask.bits()[k], a.full_mask.bits()[k]);
        ASSERT_FALSE(a.visible_mask.bits()[k] && vis_uni.bits()[k]);  // visible masks disjoint
        uni.bits()[k] |= a.full_mask.bits()[k];
        vis_uni.bits()[k] |= a.visible_mask.bits()[k];
      }
      for (std::size_t j = 0; j < i; ++j)
        ASSERT_LE(overlap_fraction(a.full_mask, p.instances[j].full_mask), s.max_overlap);
    }
    ASSERT_EQ(uni, vis_uni);
  }
}

TEST(Visibility, FullyCoveredInstanceIsDropped) {
  PlacedInstance a, b;
  a.category_id = 1;
  a.warped.mask = BitMask(10, 10, true);
  a.warped.patch = ImageRGB8(10, 10);
  a.footprint = {20, 20, 10, 10};
  a.full_area = 100;
  a.z_order = 0;
  b.category_id = 2;
  b.warped.mask = BitMask(30, 30, true);
  b.warped.patch = ImageRGB8(30, 30);
  b.footprint = {10, 10, 30, 30};
  b.full_area = 900;
  b.z_order = 1;
  std::vector<PlacedInstance> inst{a, b};
  resolve_visibility(inst, 64, 64);
  EXPECT_FALSE(inst[0].visible_mask.any());
  EXPECT_FALSE(inst[0].bbox.has_value());
  EXPECT_EQ(inst[1].visible_mask.area(), 900u);
  std::vector<int> dropped;
  const auto anns = annotate(inst, 7, &dropped);
  ASSERT_EQ(anns.size(), 1u);
  EXPECT_EQ(anns[0].category_id, 2);
  EXPECT_EQ(dropped, std::vector<int>{0});
}

TEST(Visibility, OnePercentRule) {
  EXPECT_FALSE(keep_annotation(0, 100));
  EXPECT_FALSE(keep_annotation(0, 0));
  EXPECT_FALSE(keep_annotation(9, 1000));
  EXPECT_TRUE(keep_annotation(10, 1000));
  EXPECT_TRUE(keep_annotation(1, 1));
}

namespace {

PlacedInstance single_instance(const CropRecord& c, int x, int y) {
  PlacedInstance inst;
  inst.warped = warp_crop(c, AffineParams::make(1.0, 0.0));
  inst.footprint = {x, y, inst.warped.mask.width(), inst.warped.mask.height()};
  inst.full_area = inst.warped.mask.area();
  return inst;
}

}  // namespace

TEST(Blend, ExactCopyWithoutErosionOrNoise) {
  SceneSpec s;
  s.erosion_radius = 0;
  s.noise_sigma = 0;
  const auto inst = single_instance(testsupport::make_crop(30, 20, 1, {150, 60, 30}), 5, 7);
  const ImageRGB8 bg = testsupport::make_background(64, 48, 2);
  ImageRGB8 canvas = bg;
  Rng rng(1);
  blend(canvas, inst, rng, s);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const int lx = x - 5, ly = y - 7;
      const bool in = inst.warped.mask.test(lx, ly);
      ASSERT_EQ(canvas.at(x, y), in ? inst.warped.patch.at(lx, ly) : bg.at(x, y));
    }
  Rng fresh(1);
  EXPECT_EQ(rng.next(), fresh.next());  // no draws at sigma 0
}

TEST(Blend, PastedRegionIsErodedMask) {
  SceneSpec s;
  s.erosion_radius = 1;
  s.noise_sigma = 0;
  const auto inst = single_instance(testsupport::make_crop(40, 40, 1, {150, 60, 30}), 3, 3);
  const ImageRGB8 bg(50, 50, Rgb{1, 2, 3});
  ImageRGB8 canvas = bg;
  Rng rng(1);
  blend(canvas, inst, rng, s);
  const BitMask expect = oracle::erode(inst.warped.mask, 1);
  for (int y = 0; y < 50; ++y)
    for (int x = 0; x < 50; ++x) {
      const int lx = x - 3, ly = y - 3;
      ASSERT_EQ(canvas.at(x, y) != bg.at(x, y), expect.test(lx, ly)) << x << "," << y;
    }
}

TEST(Blend, NoiseMoments) {
  SceneSpec s;
  s.erosion_radius = 0;
  s.noise_sigma = 5;
  CropRecord c;
  c.patch = ImageRGB8(120, 120, Rgb{128, 128, 128});
  c.mask = BitMask(120, 120, true);
  c.source_bbox = {0, 0, 120, 120};
  const auto inst = single_instance(c, 0, 0);
  ImageRGB8 canvas(120, 120);
  Rng rng(77);
  blend(canvas, inst, rng, s);
  double sum = 0, sq = 0;
  const auto px = canvas.bytes();
  for (auto v : px) sum += v;
  const double mean = sum / px.size();
  for (auto v : px) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (px.size() - 1));
  EXPECT_NEAR(mean, 128.0, 1.0);
  EXPECT_GE(sd, 4.0);
  EXPECT_LE(sd, 6.0);
}

namespace {

void write_backgrounds(const TempDir& dir, int n, int w, int h) {
  for (int i = 0; i < n; ++i)
    write_png(dir / fmt::format("bg_{:02d}.png", i), testsupport::make_background(w, h, i));
}

}  // namespace

TEST(BackgroundPool, SingleExactImageIsUsedOnce) {
  TempDir dir;
  write_backgrounds(dir, 1, 512, 512);
  BackgroundPool pool(dir.path());
  Rng rng(3);
  const ImageRGB8 first = next_background(rng, pool, 512, 512);
  EXPECT_EQ(first, testsupport::make_background(512, 512, 0));
  try {
    next_background(rng, pool, 512, 512);
    FAIL() << "expected PoolExhausted";
  } catch (const PoolExhausted& e) {
    EXPECT_NE(std::string(e.what()).find("add more or larger"), std::string::npos);
  }
}

TEST(BackgroundPool, ThousandDistinctKeys) {
  TempDir dir;
  write_backgrounds(dir, 3, 320, 320);
  BackgroundPool pool(dir.path());
  Rng rng(8);
  std::set<BackgroundKey> keys;
  for (int i = 0; i < 1000; ++i) {
    const auto k = pool.reserve(rng, 128, 128);
    ASSERT_EQ(k.rect.x % 8, 0);
    ASSERT_EQ(k.rect.y % 8, 0);
    ASSERT_TRUE(k.rect.inside(320, 320));
    keys.insert(k);
  }
  EXPECT_EQ(keys.size(), 1000u);
  EXPECT_EQ(pool.issued(), 1000u);
}

TEST(BackgroundPool, DrainsEveryCellThenFails) {
  TempDir dir;
  write_backgrounds(dir, 2, 40, 24);
  BackgroundPool pool(dir.path());
  const auto total = pool.cells(0, 16, 16) + pool.cells(1, 16, 16);
  EXPECT_EQ(total, 2u * 4u * 2u);
  Rng rng(1);
  std::set<BackgroundKey> keys;
  for (std::uint64_t i = 0; i < total; ++i) keys.insert(pool.reserve(rng, 16, 16));
  EXPECT_EQ(keys.size(), total);
  EXPECT_THROW(pool.reserve(rng, 16, 16), PoolExhausted);
}

TEST(BackgroundPool, UndersizedFileIsNamed) {
  TempDir dir;
  write_backgrounds(dir, 1, 100, 100);
  write_png(dir / "tiny.png", ImageRGB8(20, 20));
  BackgroundPool pool(dir.path());
  try {
    pool.require_at_least(64, 64);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny.png"), std::string::npos);
  }
}

TEST(ComposeDataset, ZeroImagesGivesCategoriesOnly) {
  TempDir dir;
  write_backgrounds(dir, 1, 200, 200);
  BackgroundPool pool(dir.path());
  const auto res = compose_dataset(small_library(), pool, small_spec(), 0);
  EXPECT_TRUE(res.dataset.images.empty());
  EXPECT_TRUE(res.dataset.annotations.empty());
  ASSERT_EQ(res.dataset.categories.size(), 3u);
  EXPECT_EQ(res.dataset.categories[0].name, "002_master_chef_can");
}

TEST(ComposeDataset, DeterministicAcrossRunsAndJobs) {
  TempDir dir;
  write_backgrounds(dir, 2, 400, 400);
  SceneSpec s = small_spec();
  s.seed = 11;
  const auto lib = small_library();
  ComposeOptions serial, parallel;
  parallel.jobs = 4;
  BackgroundPool p1(dir.path()), p2(dir.path()), p3(dir.path());
  const auto a = compose_dataset(lib, p1, s, 12, serial);
  const auto b = compose_dataset(lib, p2, s, 12, serial);
  const auto c = compose_dataset(lib, p3, s, 12, parallel);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.images, c.images);
  EXPECT_EQ(coco::dump(a.dataset), coco::dump(b.dataset));
  EXPECT_EQ(coco::dump(a.dataset), coco::dump(c.dataset));
  EXPECT_EQ(scene_log_json(a.log), scene_log_json(c.log));

  s.seed = 12;
  BackgroundPool p4(dir.path());
  const auto d = compose_dataset(lib, p4, s, 12, serial);
  EXPECT_NE(a.images, d.images);
}

TEST(ComposeDataset, OutputIsValidAndConsistent) {
  TempDir dir;
  write_backgrounds(dir, 2, 400, 400);
  const SceneSpec s = small_spec();
  BackgroundPool pool(dir.path());
  std::mutex mu;
  std::size_t scenes_seen = 0;
  ComposeOptions opts;
  opts.jobs = 3;
  opts.on_scene = [&](const ComposedScene& sc) {
    std::lock_guard lock(mu);
    ++scenes_seen;
    EXPECT_EQ(sc.file_name, scene_file_name(sc.image_id));
  };
  const auto res = compose_dataset(small_library(), pool, s, 20, opts);
  EXPECT_EQ(scenes_seen, 20u);
  EXPECT_EQ(res.images.size(), 20u);
  EXPECT_EQ(res.dataset.images.size(), 20u);
  EXPECT_EQ(res.dataset.images[0].file_name, "images/000001.png");
  const auto report = coco::validate(res.dataset);
  EXPECT_TRUE(report.ok()) << fmt::format("{}", fmt::join(report.lines(), "\n"));
  std::set<BackgroundKey> keys;
  for (std::size_t i = 0; i < res.log.size(); ++i) {
    EXPECT_EQ(res.log[i].seed, scene_seed(s.seed, i));
    EXPECT_EQ(res.log[i].placed + static_cast<int>(res.log[i].skips.size()),
              res.log[i].requested);
  }
  for (std::size_t k = 0; k < res.dataset.annotations.size(); ++k)
    EXPECT_EQ(res.dataset.annotations[k].id, static_cast<std::int64_t>(k) + 1);
}
