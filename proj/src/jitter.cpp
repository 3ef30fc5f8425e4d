#include "ostf/jitter.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ostf/errors.hpp"
#include "ostf/filters.hpp"
#include "ostf/image_io.hpp"
#include "ostf/log.hpp"

namespace ostf::jitter {

using nlohmann::json;
namespace fs = std::filesystem;

JitterConfig JitterConfig::defaults() {
  JitterConfig cfg;
  cfg.buckets = {
      {32.0, {0.4, 0.8, 75, 90, 0.2, 0.5, 1}},
      {96.0, {0.8, 1.6, 55, 80, 0.3, 0.7, 2}},
      {std::numeric_limits<double>::infinity(), {1.2, 2.4, 35, 65, 0.5, 1.0, 3}},
  };
  return cfg;
}

namespace {

IntensityParams params_from_json(const json& j) {
  IntensityParams p;
  p.sigma_lo = j.at("sigma").at(0).get<double>();
  p.sigma_hi = j.at("sigma").at(1).get<double>();
  p.quality_lo = j.at("quality").at(0).get<int>();
  p.quality_hi = j.at("quality").at(1).get<int>();
  p.strength_lo = j.at("strength").at(0).get<double>();
  p.strength_hi = j.at("strength").at(1).get<double>();
  p.feather = j.at("feather").get<int>();
  return p;
}

json params_to_json(const IntensityParams& p) {
  json j;
  j["sigma"] = {p.sigma_lo, p.sigma_hi};
  j["quality"] = {p.quality_lo, p.quality_hi};
  j["strength"] = {p.strength_lo, p.strength_hi};
  j["feather"] = p.feather;
  return j;
}

}  // namespace

JitterConfig config_from_json(const json& j) {
  JitterConfig cfg;
  cfg.buckets.clear();
  for (const auto& jb : j.at("buckets")) {
    SizeBucket b;
    if (jb.contains("max_side") && !jb.at("max_side").is_null())
      b.max_side = jb.at("max_side").get<double>();
    else
      b.max_side = std::numeric_limits<double>::infinity();
    b.params = params_from_json(jb);
    cfg.buckets.push_back(b);
  }
  if (cfg.buckets.empty()) throw ConfigError("jitter config: no buckets");
  for (std::size_t i = 1; i < cfg.buckets.size(); ++i)
    if (!(cfg.buckets[i - 1].max_side < cfg.buckets[i].max_side))
      throw ConfigError("jitter config: bucket bounds must increase");
  if (!std::isinf(cfg.buckets.back().max_side))
    throw ConfigError("jitter config: last bucket must be unbounded");
  cfg.selection_prob = j.value("selection_prob", cfg.selection_prob);
  cfg.min_text_side = j.value("min_text_side", cfg.min_text_side);
  if (j.contains("mad")) {
    cfg.mad_lo = j.at("mad").at(0).get<double>();
    cfg.mad_hi = j.at("mad").at(1).get<double>();
  }
  cfg.max_redraws = j.value("max_redraws", cfg.max_redraws);
  if (cfg.selection_prob < 0.0 || cfg.selection_prob > 1.0)
    throw ConfigError("jitter config: selection_prob outside [0,1]");
  if (cfg.mad_lo < 0.0 || cfg.mad_hi < cfg.mad_lo)
    throw ConfigError("jitter config: bad mad range");
  return cfg;
}

json config_to_json(const JitterConfig& cfg) {
  json j;
  json buckets = json::array();
  for (const auto& b : cfg.buckets) {
    json jb = params_to_json(b.params);
    if (std::isinf(b.max_side))
      jb["max_side"] = nullptr;
    else
      jb["max_side"] = b.max_side;
    buckets.push_back(std::move(jb));
  }
  j["buckets"] = std::move(buckets);
  j["selection_prob"] = cfg.selection_prob;
  j["min_text_side"] = cfg.min_text_side;
  j["mad"] = {cfg.mad_lo, cfg.mad_hi};
  j["max_redraws"] = cfg.max_redraws;
  return j;
}

JitterConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open jitter config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::gaussian_blur: return "gaussian_blur";
    case OpKind::downsample_blur: return "downsample_blur";
    case OpKind::motion_blur: return "motion_blur";
    case OpKind::sharpen: return "sharpen";
    case OpKind::jpeg: return "jpeg";
    case OpKind::deblock: return "deblock";
  }
  throw ParamError("unknown op kind");
}

OpKind op_kind_from_string(std::string_view s) {
  if (s == "gaussian_blur") return OpKind::gaussian_blur;
  if (s == "downsample_blur") return OpKind::downsample_blur;
  if (s == "motion_blur") return OpKind::motion_blur;
  if (s == "sharpen") return OpKind::sharpen;
  if (s == "jpeg") return OpKind::jpeg;
  if (s == "deblock") return OpKind::deblock;
  throw ParamError("unknown op kind: " + std::string(s));
}

namespace {

json op_to_json(const JitterOp& op) {
  json j;
  j["kind"] = to_string(op.kind);
  switch (op.kind) {
    case OpKind::gaussian_blur: j["sigma"] = op.sigma; break;
    case OpKind::downsample_blur: j["factor"] = op.factor; break;
    case OpKind::motion_blur:
      j["length"] = op.length;
      j["angle"] = op.angle;
      break;
    case OpKind::sharpen:
    case OpKind::deblock: j["strength"] = op.strength; break;
    case OpKind::jpeg: j["quality"] = op.quality; break;
  }
  return j;
}

JitterOp op_from_json(const json& j) {
  JitterOp op;
  op.kind = op_kind_from_string(j.at("kind").get<std::string>());
  op.sigma = j.value("sigma", 0.0);
  op.factor = j.value("factor", 0.0);
  op.length = j.value("length", 0);
  op.angle = j.value("angle", 0.0);
  op.strength = j.value("strength", 0.0);
  op.quality = j.value("quality", 0);
  return op;
}

}  // namespace

json recipe_to_json(const ImageRecipe& r) {
  json j;
  j["image"] = r.image;
  j["seed"] = r.seed;
  json insts = json::array();
  for (const auto& inst : r.instances) {
    json ji;
    ji["index"] = inst.index;
    ji["box"] = {inst.box.x, inst.box.y, inst.box.w, inst.box.h};
    ji["feather"] = inst.feather;
    ji["mad"] = inst.mad;
    json ops = json::array();
    for (const auto& op : inst.ops) ops.push_back(op_to_json(op));
    ji["ops"] = std::move(ops);
    insts.push_back(std::move(ji));
  }
  j["instances"] = std::move(insts);
  return j;
}

ImageRecipe recipe_from_json(const json& j) {
  ImageRecipe r;
  r.image = j.at("image").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& ji : j.at("instances")) {
    InstanceRecipe inst;
    inst.index = ji.at("index").get<int>();
    const auto& b = ji.at("box");
    inst.box = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    inst.feather = ji.at("feather").get<int>();
    inst.mad = ji.value("mad", 0.0);
    for (const auto& jo : ji.at("ops")) inst.ops.push_back(op_from_json(jo));
    r.instances.push_back(std::move(inst));
  }
  return r;
}

std::vector<ImageRecipe> load_recipes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipes: " + path.string());
  std::vector<ImageRecipe> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(recipe_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_recipes(const std::vector<ImageRecipe>& recipes, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write recipes: " + path.string());
  for (const auto& r : recipes) out << recipe_to_json(r).dump() << '\n';
}

const IntensityParams& pick_bucket(const JitterConfig& cfg, double side) {
  for (const auto& b : cfg.buckets)
    if (side < b.max_side) return b.params;
  return cfg.buckets.back().params;
}

std::vector<std::size_t> select_targets(Rng& rng, const data::ImageRecord& rec,
                                        const JitterConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rec.instances.size(); ++i) {
    const auto r = data::to_pixel_rect(rec.instances[i].bbox(), rec.width, rec.height);
    const bool eligible = std::min(r.w, r.h) >= cfg.min_text_side;
    // Draw for every instance so selection of one does not shift the others.
    const bool pick = bernoulli(rng, cfg.selection_prob);
    if (eligible && pick) out.push_back(i);
  }
  return out;
}

std::vector<JitterOp> draw_ops(Rng& rng, const IntensityParams& p) {
  const int n_ops = bernoulli(rng, 0.7) ? 1 : 2;
  std::vector<JitterOp> ops;
  for (int i = 0; i < n_ops; ++i) {
    JitterOp op;
    switch (uniform_int(rng, 0, 3)) {
      case 0:  // blur family
        switch (uniform_int(rng, 0, 2)) {
          case 0:
            op.kind = OpKind::gaussian_blur;
            op.sigma = uniform_real(rng, p.sigma_lo, p.sigma_hi);
            break;
          case 1:
            op.kind = OpKind::downsample_blur;
            op.factor = uniform_real(rng, 1.0 + p.sigma_lo, 1.0 + p.sigma_hi);
            break;
          default: {
            op.kind = OpKind::motion_blur;
            const int max_len = std::max(3, static_cast<int>(std::lround(2.0 * p.sigma_hi + 1.0)));
            op.length = uniform_int(rng, 2, max_len);
            op.angle = uniform_real(rng, 0.0, 180.0);
          }
        }
        break;
      case 1:
        op.kind = OpKind::sharpen;
        op.strength = uniform_real(rng, p.strength_lo, p.strength_hi);
        break;
      case 2:
        op.kind = OpKind::jpeg;
        op.quality = uniform_int(rng, p.quality_lo, p.quality_hi);
        break;
      default:
        op.kind = OpKind::deblock;
        op.strength = uniform_real(rng, p.strength_lo, p.strength_hi);
    }
    ops.push_back(op);
  }
  return ops;
}

img::Image apply_ops(const img::Image& patch, const std::vector<JitterOp>& ops) {
  img::Image out = patch;
  for (const auto& op : ops) {
    switch (op.kind) {
      case OpKind::gaussian_blur: out = img::gaussian_blur(out, op.sigma); break;
      case OpKind::downsample_blur: out = img::downsample_blur(out, op.factor); break;
      case OpKind::motion_blur: out = img::motion_blur(out, op.length, op.angle); break;
      case OpKind::sharpen: out = img::sharpen(out, op.strength); break;
      case OpKind::jpeg: out = img::jpeg_roundtrip(out, op.quality); break;
      case OpKind::deblock: out = img::deblock(out, op.strength); break;
    }
  }
  return out;
}

double apply_instance(img::Image& canvas, const img::IRect& bbox,
                      const std::vector<JitterOp>& ops, int feather) {
  if (bbox.w < 1 || bbox.h < 1) throw ParamError("apply_instance: empty box");
  if (bbox.x < 0 || bbox.y < 0 || bbox.x1() > canvas.width || bbox.y1() > canvas.height)
    throw ParamError("apply_instance: box outside image");
  int f = feather;
  const int half_min = std::min(bbox.w, bbox.h) / 2;
  if (f > half_min) {
    log::warn("jitter: ", "feather ", f, " clamped to ", half_min, " for ", bbox.w, "x", bbox.h,
              " box");
    f = half_min;
  }
  if (f < 0) throw ParamError("apply_instance: negative feather");

  // Context crop: filters see `f` pixels of surround so the ring the ramp
  // blends over is filtered with real neighborhood, not reflected padding.
  const int cx0 = std::max(0, bbox.x - f);
  const int cy0 = std::max(0, bbox.y - f);
  const int cx1 = std::min(canvas.width, bbox.x1() + f);
  const int cy1 = std::min(canvas.height, bbox.y1() + f);
  const img::IRect crop_rect{cx0, cy0, cx1 - cx0, cy1 - cy0};

  const img::Image context = img::crop(canvas, crop_rect);
  const img::Image jittered = apply_ops(context, ops);

  const int ox = bbox.x - cx0;  // box offset inside the crop
  const int oy = bbox.y - cy0;
  double abs_sum = 0.0;
  for (int y = 0; y < bbox.h; ++y)
    for (int x = 0; x < bbox.w; ++x) {
      const int d = 1 + std::min(std::min(x, bbox.w - 1 - x), std::min(y, bbox.h - 1 - y));
      const double alpha = std::min(1.0, static_cast<double>(d) / (f + 1.0));
      for (int c = 0; c < img::Image::channels; ++c) {
        const double orig = canvas.at(bbox.x + x, bbox.y + y, c);
        const double jit = jittered.at(ox + x, oy + y, c);
        const std::uint8_t v = img::quantize(alpha * jit + (1.0 - alpha) * orig);
        abs_sum += std::abs(static_cast<double>(v) - orig);
        canvas.at(bbox.x + x, bbox.y + y, c) = v;
      }
    }
  return abs_sum / (static_cast<double>(bbox.w) * bbox.h * img::Image::channels);
}

JitterOutcome jitter_image(const img::Image& im, const data::ImageRecord& rec,
                           std::uint64_t global_seed, const JitterConfig& cfg) {
  JitterOutcome out;
  out.image = im;
  out.record = rec;
  out.recipe.image = rec.image;
  const std::uint64_t img_seed = mix64(global_seed, fnv1a64(rec.image));
  out.recipe.seed = img_seed;

  Rng select_rng(img_seed);
  const auto targets = select_targets(select_rng, rec, cfg);

  for (const std::size_t idx : targets) {
    Rng rng(mix64(img_seed, static_cast<std::uint64_t>(idx)));
    const auto box = data::to_pixel_rect(rec.instances[idx].bbox(), rec.width, rec.height);
    const double side = std::sqrt(static_cast<double>(box.w) * box.h);
    const IntensityParams& params = pick_bucket(cfg, side);

    const img::Image backup = img::crop(out.image, box);
    bool accepted = false;
    for (int attempt = 0; attempt <= cfg.max_redraws; ++attempt) {
      const auto ops = draw_ops(rng, params);
      const double mad = apply_instance(out.image, box, ops, params.feather);
      if (mad >= cfg.mad_lo && mad <= cfg.mad_hi) {
        InstanceRecipe ir;
        ir.index = static_cast<int>(idx);
        ir.box = box;
        ir.feather = params.feather;
        ir.ops = ops;
        ir.mad = mad;
        out.recipe.instances.push_back(std::move(ir));
        out.record.instances[idx].label = data::Label::tampered;
        accepted = true;
        break;
      }
      img::paste(out.image, backup, box.x, box.y);
    }
    if (!accepted) {
      ++out.skipped;
      log::warn("jitter: ", rec.image, " instance ", idx, ": no draw hit the difference band after ",
                cfg.max_redraws + 1, " tries, leaving it untouched");
    }
  }
  return out;
}

img::Image replay_recipe(const img::Image& im, const ImageRecipe& recipe) {
  img::Image canvas = im;
  for (const auto& inst : recipe.instances)
    apply_instance(canvas, inst.box, inst.ops, inst.feather);
  return canvas;
}

RunStats run_jitter(const data::Manifest& manifest, const fs::path& images_dir,
                    const fs::path& out_dir, std::uint64_t seed, const JitterConfig& cfg,
                    int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = manifest.records.size();
  if (threads < 1) threads = 1;
  threads = static_cast<int>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));

  // Create every output directory up front; workers only write files.
  fs::create_directories(out_dir / "images");
  std::vector<fs::path> out_rel(n);
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path rel(manifest.records[i].image);
    out_rel[i] = fs::path("images") / rel.parent_path() / (rel.stem().string() + ".png");
    fs::create_directories((out_dir / out_rel[i]).parent_path());
  }

  struct Slot {
    data::ImageRecord record;
    ImageRecipe recipe;
    int skipped = 0;
  };
  std::vector<Slot> slots(n);
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::vector<std::string> errors;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      const auto& rec = manifest.records[i];
      try {
        const img::Image im = img::load_image(images_dir / rec.image);
        if (im.width != rec.width || im.height != rec.height)
          throw ParamError(rec.image + ": manifest size " + std::to_string(rec.width) + "x" +
                           std::to_string(rec.height) + " does not match file");
        auto outcome = jitter_image(im, rec, seed, cfg);
        img::save_png(outcome.image, out_dir / out_rel[i]);
        slots[i].record = std::move(outcome.record);
        slots[i].record.image = out_rel[i].generic_string();
        slots[i].recipe = std::move(outcome.recipe);
        slots[i].skipped = outcome.skipped;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.emplace_back(rec.image + ": " + e.what());
        return;
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!errors.empty()) throw IoError("jitter run failed: " + errors.front());

  data::Manifest out_manifest;
  out_manifest.metadata = manifest.metadata;
  out_manifest.metadata["jitter_seed"] = std::to_string(seed);
  std::vector<ImageRecipe> recipes;
  RunStats stats;
  stats.images = static_cast<int>(n);
  for (auto& slot : slots) {
    stats.selected += static_cast<int>(slot.recipe.instances.size());
    stats.skipped += slot.skipped;
    out_manifest.records.push_back(std::move(slot.record));
    recipes.push_back(std::move(slot.recipe));
  }
  data::save_manifest(out_manifest, out_dir / "manifest.jsonl");
  save_recipes(recipes, out_dir / "recipes.jsonl");

  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

}  // namespace ostf::jitter
