#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ostf/dataset.hpp"
#include "ostf/image.hpp"
#include "ostf/rng.hpp"

namespace ostf::jitter {

// Perturbation strength for one text-size bucket. Blur sigma doubles as the
// scale knob for the downsample and motion variants; strength drives both
// the sharpen and deblock ops.
struct IntensityParams {
  double sigma_lo = 0.0, sigma_hi = 0.0;
  int quality_lo = 0, quality_hi = 0;
  double strength_lo = 0.0, strength_hi = 0.0;
  int feather = 0;
};

struct SizeBucket {
  double max_side = 0.0;  // bucket covers sqrt(w*h) < max_side; +inf for last
  IntensityParams params;
};

struct JitterConfig {
  std::vector<SizeBucket> buckets;
  double selection_prob = 0.5;
  int min_text_side = 8;
  double mad_lo = 1.0;
  double mad_hi = 24.0;
  int max_redraws = 5;

  static JitterConfig defaults();
};

JitterConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const JitterConfig& cfg);
JitterConfig load_config(const std::filesystem::path& path);

enum class OpKind { gaussian_blur, downsample_blur, motion_blur, sharpen, jpeg, deblock };

const char* to_string(OpKind k);
OpKind op_kind_from_string(std::string_view s);

struct JitterOp {
  OpKind kind = OpKind::gaussian_blur;
  double sigma = 0.0;     // gaussian_blur
  double factor = 0.0;    // downsample_blur
  int length = 0;         // motion_blur
  double angle = 0.0;     // motion_blur, degrees
  double strength = 0.0;  // sharpen, deblock
  int quality = 0;        // jpeg
};

struct InstanceRecipe {
  int index = 0;
  img::IRect box;  // pixel rect the edit touched; makes replay self-contained
  int feather = 0;
  std::vector<JitterOp> ops;
  double mad = 0.0;  // realized mean absolute difference over the box
};

struct ImageRecipe {
  std::string image;
  std::uint64_t seed = 0;
  std::vector<InstanceRecipe> instances;
};

nlohmann::json recipe_to_json(const ImageRecipe& r);
ImageRecipe recipe_from_json(const nlohmann::json& j);
std::vector<ImageRecipe> load_recipes(const std::filesystem::path& path);
void save_recipes(const std::vector<ImageRecipe>& recipes, const std::filesystem::path& path);

// Bucket lookup by geometric mean side sqrt(w*h).
const IntensityParams& pick_bucket(const JitterConfig& cfg, double side);

// Eligible instances (min box side >= min_text_side) kept with
// selection_prob each, in index order.
std::vector<std::size_t> select_targets(Rng& rng, const data::ImageRecord& rec,
                                        const JitterConfig& cfg);

std::vector<JitterOp> draw_ops(Rng& rng, const IntensityParams& params);

img::Image apply_ops(const img::Image& patch, const std::vector<JitterOp>& ops);

// Replays one instance edit on the canvas: crop the box expanded by the
// feather width (context for the filters), run the op chain, then composite
// the box-sized center back with a linear alpha ramp over the outermost
// `feather` pixel rings inside the box. Returns the realized MAD between the
// old and new box contents.
double apply_instance(img::Image& canvas, const img::IRect& bbox, const std::vector<JitterOp>& ops,
                      int feather);

struct JitterOutcome {
  img::Image image;
  data::ImageRecord record;  // selected instances relabeled tampered
  ImageRecipe recipe;        // skipped instances are absent
  int skipped = 0;           // selected but out of MAD range after max redraws
};

JitterOutcome jitter_image(const img::Image& im, const data::ImageRecord& rec,
                           std::uint64_t global_seed, const JitterConfig& cfg);

// Deterministic re-application; no RNG involved.
img::Image replay_recipe(const img::Image& im, const ImageRecipe& recipe);

struct RunStats {
  int images = 0;
  int selected = 0;
  int skipped = 0;
  double seconds = 0.0;
};

// Emits out_dir/images/*.png, out_dir/manifest.jsonl and out_dir/recipes.jsonl.
// Output bytes depend only on the inputs and seed, not on the thread count.
RunStats run_jitter(const data::Manifest& manifest, const std::filesystem::path& images_dir,
                    const std::filesystem::path& out_dir, std::uint64_t seed,
                    const JitterConfig& cfg, int threads);

}  // namespace ostf::jitter
