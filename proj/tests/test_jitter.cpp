#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "ostf/filters.hpp"
#include "ostf/image_io.hpp"
#include "ostf/jitter.hpp"
#include "support/fixtures.hpp"
#include "support/reference.hpp"

using namespace ostf;

namespace {

data::ImageRecord three_box_record(int w = 128, int h = 128) {
  data::ImageRecord rec;
  rec.image = "mem_0.png";
  rec.width = w;
  rec.height = h;
  for (const data::Rect& b :
       {data::Rect{8, 8, 40, 24}, data::Rect{64, 16, 48, 40}, data::Rect{16, 72, 96, 36}})
    rec.instances.push_back(data::TextInstance::from_rect(b, data::Label::authentic));
  return rec;
}

// Relative path -> file bytes for every regular file under root.
std::map<std::string, std::vector<std::uint8_t>> snapshot_tree(const std::filesystem::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[std::filesystem::relative(e.path(), root).generic_string()] = fx::read_bytes(e.path());
  return out;
}

}  // namespace

TEST_CASE("default config carries three growing buckets") {
  const auto cfg = jitter::JitterConfig::defaults();
  REQUIRE(cfg.buckets.size() == 3);
  CHECK(cfg.buckets[0].max_side == 32.0);
  CHECK(cfg.buckets[0].params.sigma_lo == 0.4);
  CHECK(cfg.buckets[0].params.feather == 1);
  CHECK(cfg.buckets[1].max_side == 96.0);
  CHECK(cfg.buckets[1].params.quality_lo == 55);
  CHECK(std::isinf(cfg.buckets[2].max_side));
  CHECK(cfg.buckets[2].params.strength_hi == 1.0);
  CHECK(cfg.selection_prob == 0.5);
  CHECK(cfg.min_text_side == 8);
  CHECK(cfg.mad_lo == 1.0);
  CHECK(cfg.mad_hi == 24.0);
  CHECK(cfg.max_redraws == 5);
}

TEST_CASE("config round-trips through json and rejects bad shapes") {
  const auto cfg = jitter::JitterConfig::defaults();
  const auto back = jitter::config_from_json(jitter::config_to_json(cfg));
  REQUIRE(back.buckets.size() == cfg.buckets.size());
  for (std::size_t i = 0; i < cfg.buckets.size(); ++i) {
    CHECK(back.buckets[i].max_side == cfg.buckets[i].max_side);
    CHECK(back.buckets[i].params.sigma_hi == cfg.buckets[i].params.sigma_hi);
    CHECK(back.buckets[i].params.quality_hi == cfg.buckets[i].params.quality_hi);
    CHECK(back.buckets[i].params.feather == cfg.buckets[i].params.feather);
  }
  CHECK(back.selection_prob == cfg.selection_prob);
  CHECK(back.mad_hi == cfg.mad_hi);

  auto j = jitter::config_to_json(cfg);
  j["buckets"] = nlohmann::json::array();
  CHECK_THROWS_AS(jitter::config_from_json(j), ConfigError);

  j = jitter::config_to_json(cfg);
  j["buckets"][0]["max_side"] = 200.0;  // out of order
  CHECK_THROWS_AS(jitter::config_from_json(j), ConfigError);

  j = jitter::config_to_json(cfg);
  j["buckets"][2]["max_side"] = 500.0;  // last bucket must cover everything
  CHECK_THROWS_AS(jitter::config_from_json(j), ConfigError);

  j = jitter::config_to_json(cfg);
  j["selection_prob"] = 1.5;
  CHECK_THROWS_AS(jitter::config_from_json(j), ConfigError);

  j = jitter::config_to_json(cfg);
  j["mad"] = {9.0, 3.0};
  CHECK_THROWS_AS(jitter::config_from_json(j), ConfigError);
}

TEST_CASE("buckets are chosen by geometric mean side") {
  const auto cfg = jitter::JitterConfig::defaults();
  CHECK(jitter::pick_bucket(cfg, 10.0).sigma_lo == 0.4);
  CHECK(jitter::pick_bucket(cfg, 31.9).sigma_lo == 0.4);
  CHECK(jitter::pick_bucket(cfg, 32.0).sigma_lo == 0.8);  // boundary goes up
  CHECK(jitter::pick_bucket(cfg, 95.9).sigma_lo == 0.8);
  CHECK(jitter::pick_bucket(cfg, 96.0).sigma_lo == 1.2);
  CHECK(jitter::pick_bucket(cfg, 5000.0).sigma_lo == 1.2);
}

TEST_CASE("target selection filters small text and follows the probability") {
  auto cfg = jitter::JitterConfig::defaults();
  data::ImageRecord rec = three_box_record();
  // Shrink the middle box below the eligibility floor.
  rec.instances[1] = data::TextInstance::from_rect({64, 16, 20, 7}, data::Label::authentic);

  cfg.selection_prob = 0.0;
  Rng r0(5);
  CHECK(jitter::select_targets(r0, rec, cfg).empty());

  cfg.selection_prob = 1.0;
  Rng r1(5);
  CHECK(jitter::select_targets(r1, rec, cfg) == std::vector<std::size_t>{0, 2});

  // Same seed, same picks.
  cfg.selection_prob = 0.5;
  Rng a(9), b(9);
  CHECK(jitter::select_targets(a, rec, cfg) == jitter::select_targets(b, rec, cfg));
}

TEST_CASE("drawn ops stay inside the bucket ranges") {
  const auto& params = jitter::JitterConfig::defaults().buckets[1].params;
  const int max_len = std::max(3, static_cast<int>(std::lround(2.0 * params.sigma_hi + 1.0)));
  Rng rng(31);
  int singles = 0, total = 0;
  for (int i = 0; i < 400; ++i) {
    const auto ops = jitter::draw_ops(rng, params);
    REQUIRE(!ops.empty());
    REQUIRE(ops.size() <= 2);
    singles += ops.size() == 1;
    ++total;
    for (const auto& op : ops) switch (op.kind) {
        case jitter::OpKind::gaussian_blur:
          CHECK(op.sigma >= params.sigma_lo);
          CHECK(op.sigma <= params.sigma_hi);
          break;
        case jitter::OpKind::downsample_blur:
          CHECK(op.factor >= 1.0 + params.sigma_lo);
          CHECK(op.factor <= 1.0 + params.sigma_hi);
          break;
        case jitter::OpKind::motion_blur:
          CHECK(op.length >= 2);
          CHECK(op.length <= max_len);
          CHECK(op.angle >= 0.0);
          CHECK(op.angle <= 180.0);
          break;
        case jitter::OpKind::sharpen:
        case jitter::OpKind::deblock:
          CHECK(op.strength >= params.strength_lo);
          CHECK(op.strength <= params.strength_hi);
          break;
        case jitter::OpKind::jpeg:
          CHECK(op.quality >= params.quality_lo);
          CHECK(op.quality <= params.quality_hi);
          break;
      }
  }
  // One op should dominate at the documented 0.7 rate.
  CHECK(singles > total / 2);

  Rng x(77), y(77);
  for (int i = 0; i < 20; ++i) {
    const auto ox = jitter::draw_ops(x, params);
    const auto oy = jitter::draw_ops(y, params);
    REQUIRE(ox.size() == oy.size());
    for (std::size_t k = 0; k < ox.size(); ++k) {
      CHECK(ox[k].kind == oy[k].kind);
      CHECK(ox[k].sigma == oy[k].sigma);
      CHECK(ox[k].quality == oy[k].quality);
    }
  }
}

TEST_CASE("apply_ops is the composed filter chain") {
  const img::Image patch = fx::textured_image(40, 30, 21);

  jitter::JitterOp blur;
  blur.kind = jitter::OpKind::gaussian_blur;
  blur.sigma = 1.1;
  jitter::JitterOp sharp;
  sharp.kind = jitter::OpKind::sharpen;
  sharp.strength = 0.4;
  CHECK(ref::max_abs_diff(jitter::apply_ops(patch, {blur, sharp}),
                          img::sharpen(img::gaussian_blur(patch, 1.1), 0.4)) == 0);

  jitter::JitterOp jpeg;
  jpeg.kind = jitter::OpKind::jpeg;
  jpeg.quality = 60;
  CHECK(ref::max_abs_diff(jitter::apply_ops(patch, {jpeg}), img::jpeg_roundtrip(patch, 60)) == 0);

  jitter::JitterOp deb;
  deb.kind = jitter::OpKind::deblock;
  deb.strength = 0.8;
  jitter::JitterOp down;
  down.kind = jitter::OpKind::downsample_blur;
  down.factor = 1.6;
  CHECK(ref::max_abs_diff(jitter::apply_ops(patch, {down, deb}),
                          img::deblock(img::downsample_blur(patch, 1.6), 0.8)) == 0);

  CHECK(ref::max_abs_diff(jitter::apply_ops(patch, {}), patch) == 0);
}

TEST_CASE("apply_instance touches only the box") {
  img::Image canvas = fx::textured_image(64, 48, 33);
  const img::Image before = canvas;
  const img::IRect box{10, 12, 24, 16};

  jitter::JitterOp op;
  op.kind = jitter::OpKind::gaussian_blur;
  op.sigma = 1.4;
  const double mad = jitter::apply_instance(canvas, box, {op}, 2);

  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c)
        if (!box.contains(x, y)) CHECK(canvas.at(x, y, c) == before.at(x, y, c));

  CHECK(img::mad(img::crop(before, box), img::crop(canvas, box)) == doctest::Approx(mad));
  CHECK(mad > 0.0);
}

TEST_CASE("zero feather is a hard paste of the filtered box") {
  img::Image canvas = fx::textured_image(64, 48, 34);
  const img::Image before = canvas;
  const img::IRect box{8, 8, 20, 14};

  jitter::JitterOp op;
  op.kind = jitter::OpKind::sharpen;
  op.strength = 0.5;
  jitter::apply_instance(canvas, box, {op}, 0);

  const img::Image want = jitter::apply_ops(img::crop(before, box), {op});
  CHECK(ref::max_abs_diff(img::crop(canvas, box), want) == 0);
}

TEST_CASE("feathered splice ramps alpha inside the box over filtered context") {
  img::Image canvas = fx::textured_image(64, 48, 35);
  const img::Image before = canvas;
  const img::IRect box{5, 4, 9, 7};
  const int f = 2;

  jitter::JitterOp op;
  op.kind = jitter::OpKind::gaussian_blur;
  op.sigma = 1.0;
  jitter::apply_instance(canvas, box, {op}, f);

  // Rebuild the expected result from the documented rule: filter the box plus
  // f pixels of context, then alpha = min(1, d / (f+1)) with d the 1-based
  // ring distance from the box border.
  const img::IRect ctx{box.x - f, box.y - f, box.w + 2 * f, box.h + 2 * f};
  const img::Image jit = jitter::apply_ops(img::crop(before, ctx), {op});
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x) {
      const int d = 1 + std::min(std::min(x, box.w - 1 - x), std::min(y, box.h - 1 - y));
      const double alpha = std::min(1.0, static_cast<double>(d) / (f + 1));
      for (int c = 0; c < 3; ++c) {
        const double orig = before.at(box.x + x, box.y + y, c);
        const double edit = jit.at(f + x, f + y, c);
        CHECK(canvas.at(box.x + x, box.y + y, c) ==
              img::quantize(alpha * edit + (1.0 - alpha) * orig));
      }
    }
}

TEST_CASE("oversized feather clamps to half the box") {
  const img::Image src = fx::textured_image(64, 48, 36);
  const img::IRect box{20, 20, 10, 4};  // half of the short side is 2

  jitter::JitterOp op;
  op.kind = jitter::OpKind::motion_blur;
  op.length = 4;
  op.angle = 45.0;

  img::Image big = src, small = src;
  jitter::apply_instance(big, box, {op}, 9);
  jitter::apply_instance(small, box, {op}, 2);
  CHECK(big.data == small.data);
}

TEST_CASE("apply_instance rejects impossible boxes") {
  img::Image canvas = fx::textured_image(32, 32, 37);
  jitter::JitterOp op;
  op.kind = jitter::OpKind::sharpen;
  op.strength = 0.3;
  CHECK_THROWS_AS(jitter::apply_instance(canvas, {4, 4, 0, 5}, {op}, 1), ParamError);
  CHECK_THROWS_AS(jitter::apply_instance(canvas, {28, 4, 10, 5}, {op}, 1), ParamError);
  CHECK_THROWS_AS(jitter::apply_instance(canvas, {-1, 4, 10, 5}, {op}, 1), ParamError);
}

TEST_CASE("jitter_image is deterministic and relabels what it edits") {
  const img::Image im = fx::textured_image(128, 128, 40);
  const data::ImageRecord rec = three_box_record();
  auto cfg = jitter::JitterConfig::defaults();
  cfg.selection_prob = 1.0;

  const auto a = jitter::jitter_image(im, rec, 1234, cfg);
  const auto b = jitter::jitter_image(im, rec, 1234, cfg);
  CHECK(a.image.data == b.image.data);
  CHECK(jitter::recipe_to_json(a.recipe).dump() == jitter::recipe_to_json(b.recipe).dump());

  // A different seed draws a different edit.
  const auto c = jitter::jitter_image(im, rec, 99, cfg);
  CHECK(a.image.data != c.image.data);

  CHECK(a.recipe.image == rec.image);
  CHECK(a.recipe.seed == mix64(1234, fnv1a64(rec.image)));
  CHECK(a.recipe.instances.size() + static_cast<std::size_t>(a.skipped) == rec.instances.size());

  // Geometry and sizes never move; only labels of edited instances flip.
  CHECK(a.record.width == rec.width);
  REQUIRE(a.record.instances.size() == rec.instances.size());
  std::vector<bool> edited(rec.instances.size(), false);
  for (const auto& ir : a.recipe.instances) {
    edited[static_cast<std::size_t>(ir.index)] = true;
    CHECK(ir.mad >= cfg.mad_lo);
    CHECK(ir.mad <= cfg.mad_hi);
  }
  for (std::size_t i = 0; i < rec.instances.size(); ++i) {
    CHECK((a.record.instances[i].quad.array() == rec.instances[i].quad.array()).all());
    CHECK(a.record.instances[i].label ==
          (edited[i] ? data::Label::tampered : data::Label::authentic));
  }

  // Every changed pixel sits inside an edited box.
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c)
        if (a.image.at(x, y, c) != im.at(x, y, c)) {
          bool inside = false;
          for (const auto& ir : a.recipe.instances) inside = inside || ir.box.contains(x, y);
          CHECK(inside);
        }
}

TEST_CASE("recipes replay bit-exactly") {
  const img::Image im = fx::textured_image(128, 128, 41);
  const data::ImageRecord rec = three_box_record();
  auto cfg = jitter::JitterConfig::defaults();
  cfg.selection_prob = 1.0;

  const auto outcome = jitter::jitter_image(im, rec, 7, cfg);
  REQUIRE(!outcome.recipe.instances.empty());
  const img::Image replayed = jitter::replay_recipe(im, outcome.recipe);
  CHECK(replayed.data == outcome.image.data);
}

TEST_CASE("zero probability leaves the image untouched") {
  const img::Image im = fx::textured_image(96, 96, 42);
  data::ImageRecord rec = three_box_record(96, 96);
  rec.instances.pop_back();  // third box spills past 96x96
  auto cfg = jitter::JitterConfig::defaults();
  cfg.selection_prob = 0.0;
  const auto out = jitter::jitter_image(im, rec, 7, cfg);
  CHECK(out.image.data == im.data);
  CHECK(out.recipe.instances.empty());
  CHECK(out.skipped == 0);
  for (const auto& inst : out.record.instances) CHECK(inst.label == data::Label::authentic);
}

TEST_CASE("recipe files round-trip") {
  fx::TempDir dir;
  jitter::ImageRecipe r;
  r.image = "x/y.png";
  r.seed = 0xdeadbeefULL;
  jitter::InstanceRecipe ir;
  ir.index = 2;
  ir.box = {4, 5, 30, 12};
  ir.feather = 2;
  ir.mad = 3.75;
  jitter::JitterOp op;
  op.kind = jitter::OpKind::jpeg;
  op.quality = 63;
  ir.ops.push_back(op);
  op = {};
  op.kind = jitter::OpKind::motion_blur;
  op.length = 5;
  op.angle = 33.25;
  ir.ops.push_back(op);
  r.instances.push_back(ir);

  jitter::save_recipes({r}, dir.path / "recipes.jsonl");
  const auto back = jitter::load_recipes(dir.path / "recipes.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].image == r.image);
  CHECK(back[0].seed == r.seed);
  REQUIRE(back[0].instances.size() == 1);
  const auto& bi = back[0].instances[0];
  CHECK(bi.index == 2);
  CHECK(bi.box.x == 4);
  CHECK(bi.box.w == 30);
  CHECK(bi.feather == 2);
  CHECK(bi.mad == 3.75);
  REQUIRE(bi.ops.size() == 2);
  CHECK(bi.ops[0].kind == jitter::OpKind::jpeg);
  CHECK(bi.ops[0].quality == 63);
  CHECK(bi.ops[1].kind == jitter::OpKind::motion_blur);
  CHECK(bi.ops[1].length == 5);
  CHECK(bi.ops[1].angle == 33.25);
}

TEST_CASE("run_jitter output does not depend on the worker count") {
  fx::TempDir in_dir, out1, out3;
  const auto manifest = fx::write_jitter_fixture(in_dir.path, 12, 500);

  const auto cfg = jitter::JitterConfig::defaults();
  const auto s1 = jitter::run_jitter(manifest, in_dir.path / "images", out1.path, 77, cfg, 1);
  const auto s3 = jitter::run_jitter(manifest, in_dir.path / "images", out3.path, 77, cfg, 3);

  CHECK(s1.images == 12);
  CHECK(s3.images == 12);
  CHECK(s1.selected == s3.selected);
  CHECK(s1.skipped == s3.skipped);

  const auto t1 = snapshot_tree(out1.path);
  const auto t3 = snapshot_tree(out3.path);
  REQUIRE(t1.size() == t3.size());
  for (const auto& [rel, bytes] : t1) {
    REQUIRE(t3.count(rel) == 1);
    CHECK(t3.at(rel) == bytes);
  }
}

TEST_CASE("run_jitter emits a coherent output tree") {
  fx::TempDir in_dir, out;
  auto manifest = fx::write_jitter_fixture(in_dir.path, 9, 600);

  // A nested path must survive into the output tree.
  std::filesystem::create_directories(in_dir.path / "images" / "sub");
  std::filesystem::copy_file(in_dir.path / "images" / "img_0.png",
                             in_dir.path / "images" / "sub" / "extra.png");
  data::ImageRecord nested;
  nested.image = "sub/extra.png";
  nested.width = 128;
  nested.height = 128;
  nested.instances.push_back(
      data::TextInstance::from_rect({16, 16, 64, 64}, data::Label::authentic));
  manifest.records.push_back(nested);

  auto cfg = jitter::JitterConfig::defaults();
  cfg.selection_prob = 1.0;
  const auto stats = jitter::run_jitter(manifest, in_dir.path / "images", out.path, 3, cfg, 2);

  CHECK(stats.images == 10);
  CHECK(stats.selected > 0);

  const auto out_manifest = data::load_manifest(out.path / "manifest.jsonl");
  REQUIRE(out_manifest.records.size() == 10);
  CHECK(out_manifest.metadata.at("jitter_seed") == "3");
  for (const auto& rec : out_manifest.records) {
    CHECK(rec.image.rfind("images/", 0) == 0);
    CHECK(std::filesystem::exists(out.path / rec.image));
  }
  CHECK(out_manifest.records[9].image == "images/sub/extra.png");

  const auto stats_out = data::manifest_stats(out_manifest);
  CHECK(stats_out.instances_tampered == stats.selected);

  const auto recipes = jitter::load_recipes(out.path / "recipes.jsonl");
  REQUIRE(recipes.size() == 10);
  long edited = 0;
  for (const auto& r : recipes) edited += static_cast<long>(r.instances.size());
  CHECK(edited == stats.selected);

  // Replay each recipe against the source and compare with the emitted png.
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    const img::Image src = img::load_png(in_dir.path / "images" / recipes[i].image);
    const img::Image replayed = jitter::replay_recipe(src, recipes[i]);
    const img::Image emitted = img::load_png(out.path / out_manifest.records[i].image);
    CHECK(replayed.data == emitted.data);
  }
}

TEST_CASE("run_jitter validates manifest sizes against the files") {
  fx::TempDir in_dir, out;
  auto manifest = fx::write_jitter_fixture(in_dir.path, 2, 700);
  manifest.records[1].width = 999;
  CHECK_THROWS_AS(
      jitter::run_jitter(manifest, in_dir.path / "images", out.path, 1,
                         jitter::JitterConfig::defaults(), 1),
      IoError);
}
