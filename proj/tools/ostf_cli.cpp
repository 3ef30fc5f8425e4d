#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ostf/daf.hpp"
#include "ostf/dataset.hpp"
#include "ostf/errors.hpp"
#include "ostf/eval.hpp"
#include "ostf/image_io.hpp"
#include "ostf/jitter.hpp"
#include "ostf/log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ostf;

namespace {

int json_indent(bool pretty) { return pretty ? 2 : -1; }

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("OSTF_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void log_config(const json& cfg) { log::info("config ", cfg.dump()); }

struct JitterArgs {
  std::string manifest, images, out, config;
  std::uint64_t seed = 0;
  double prob = -1.0;
  int threads = 0;
  bool pretty = false;
};

int run_jitter(const JitterArgs& a) {
  jitter::JitterConfig cfg =
      a.config.empty() ? jitter::JitterConfig::defaults() : jitter::load_config(a.config);
  if (a.prob >= 0.0) {
    if (a.prob > 1.0) throw ParamError("--prob must be in [0,1]");
    cfg.selection_prob = a.prob;
  }
  const int threads = resolve_threads(a.threads);

  json resolved;
  resolved["subcommand"] = "jitter";
  resolved["manifest"] = a.manifest;
  resolved["images"] = a.images;
  resolved["out"] = a.out;
  resolved["seed"] = a.seed;
  resolved["threads"] = threads;
  resolved["jitter"] = jitter::config_to_json(cfg);
  log_config(resolved);

  const data::Manifest m = data::load_manifest(a.manifest);
  const jitter::RunStats stats = jitter::run_jitter(m, a.images, a.out, a.seed, cfg, threads);

  json out;
  out["images"] = stats.images;
  out["instances_jittered"] = stats.selected;
  out["instances_skipped"] = stats.skipped;
  out["seconds"] = stats.seconds;
  out["images_per_second"] = stats.seconds > 0.0 ? stats.images / stats.seconds : 0.0;
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return 0;
}

struct EvalArgs {
  std::string manifest, preds, out;
  std::string mode = "instance";
  std::string distort = "none";
  double iou = 0.5;
  double score_threshold = 0.5;
  bool pretty = false;
};

json scores_json(const eval::ClassScores& s) {
  json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  if (s.iou) j["iou"] = *s.iou;
  return j;
}

json cell_json(const eval::CellScores& c) {
  json j;
  j["real"] = scores_json(c.real);
  j["tampered"] = scores_json(c.tampered);
  return j;
}

int run_eval(const EvalArgs& a) {
  eval::EvalOptions opts;
  opts.mode = eval::mode_from_string(a.mode);
  opts.iou_threshold = a.iou;
  opts.score_threshold = a.score_threshold;
  opts.distort = eval::distort_from_string(a.distort);

  json resolved;
  resolved["subcommand"] = "eval";
  resolved["manifest"] = a.manifest;
  resolved["preds"] = a.preds;
  resolved["mode"] = a.mode;
  resolved["iou"] = a.iou;
  resolved["score_threshold"] = a.score_threshold;
  resolved["distort"] = a.distort;
  log_config(resolved);

  data::Manifest gt = data::load_manifest(a.manifest);
  gt = eval::distort_geometry(gt, opts.distort);
  const auto preds = eval::load_predictions(a.preds);
  const eval::CellScores cell = eval::evaluate_pair(preds, gt, opts);

  const json out = cell_json(cell);
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw IoError("cannot write " + a.out);
    f << out.dump(2) << '\n';
  }
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return 0;
}

struct MatrixArgs {
  std::string sessions, preds, out;
  std::string mode = "instance";
  std::string distort = "none";
  double iou = 0.5;
  double score_threshold = 0.5;
  int threads = 0;
  bool pretty = false;
};

int run_matrix(const MatrixArgs& a) {
  eval::EvalOptions opts;
  opts.mode = eval::mode_from_string(a.mode);
  opts.iou_threshold = a.iou;
  opts.score_threshold = a.score_threshold;
  opts.distort = eval::distort_from_string(a.distort);
  const int threads = resolve_threads(a.threads);

  json resolved;
  resolved["subcommand"] = "matrix";
  resolved["sessions"] = a.sessions;
  resolved["preds"] = a.preds;
  resolved["out"] = a.out;
  resolved["mode"] = a.mode;
  resolved["iou"] = a.iou;
  resolved["score_threshold"] = a.score_threshold;
  resolved["distort"] = a.distort;
  resolved["threads"] = threads;
  log_config(resolved);

  const auto registry = data::load_session_registry(a.sessions);
  std::vector<std::string> names;
  for (const auto& s : registry) names.push_back(s.name);

  // Every (train, test) pair needs a prediction file before anything runs.
  const fs::path preds_dir(a.preds);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> missing;
  for (const auto& train : names)
    for (const auto& test : names) {
      const fs::path p = preds_dir / (train + "__" + test + ".jsonl");
      if (!fs::exists(p))
        missing.push_back(train + "/" + test);
      else
        pairs.emplace_back(train, test);
    }
  if (!missing.empty()) {
    std::string msg = "missing prediction files for " + std::to_string(missing.size()) +
                      " train/test pairs:";
    for (const auto& m : missing) msg += " " + m;
    throw AggregationError(msg);
  }

  std::map<std::string, data::Manifest> gt_by_session;
  for (const auto& s : registry)
    gt_by_session[s.name] =
        eval::distort_geometry(data::load_manifest(s.test_manifest), opts.distort);

  std::vector<eval::CellScores> results(pairs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::vector<std::string> errors;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      try {
        const fs::path p = preds_dir / (pairs[i].first + "__" + pairs[i].second + ".jsonl");
        results[i] = eval::evaluate_pair(eval::load_predictions(p),
                                         gt_by_session.at(pairs[i].second), opts);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.emplace_back(pairs[i].first + "/" + pairs[i].second + ": " + e.what());
        return;
      }
    }
  };
  {
    const int nthreads = std::min<int>(threads, static_cast<int>(pairs.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }
  if (!errors.empty()) throw Error("matrix evaluation failed: " + errors.front());

  std::map<std::pair<std::string, std::string>, eval::CellScores> cells;
  for (std::size_t i = 0; i < pairs.size(); ++i) cells[pairs[i]] = results[i];
  const eval::EvalMatrix matrix = eval::aggregate_matrix(names, cells);

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    eval::write_matrix_json(matrix, fs::path(a.out) / "matrix.json");
    eval::write_matrix_csv(matrix, fs::path(a.out) / "matrix_real.csv",
                           fs::path(a.out) / "matrix_tampered.csv");
  }

  json out;
  out["real"] = scores_json(matrix.aggregates.real);
  out["tampered"] = scores_json(matrix.aggregates.tampered);
  out["overall_mf"] = matrix.aggregates.overall_mf;
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return 0;
}

struct StatsArgs {
  std::string manifest, sessions;
  bool pretty = false;
};

json split_json(const data::SplitStats& s) {
  json j;
  j["images_authentic"] = s.images_authentic;
  j["images_tampered"] = s.images_tampered;
  j["instances_authentic"] = s.instances_authentic;
  j["instances_tampered"] = s.instances_tampered;
  return j;
}

int run_stats(const StatsArgs& a) {
  if (a.manifest.empty() == a.sessions.empty())
    throw ParamError("stats: pass exactly one of --manifest or --sessions");

  json resolved;
  resolved["subcommand"] = "stats";
  resolved["manifest"] = a.manifest;
  resolved["sessions"] = a.sessions;
  log_config(resolved);

  json out;
  if (!a.manifest.empty()) {
    out = split_json(data::manifest_stats(data::load_manifest(a.manifest)));
  } else {
    const auto registry = data::load_session_registry(a.sessions);
    long images = 0, images_tampered = 0;
    long long texts = 0, texts_tampered = 0;
    json rows = json::array();
    for (const auto& ref : registry) {
      data::Session s;
      s.name = ref.name;
      s.train_manifest = data::load_manifest(ref.train_manifest);
      s.test_manifest = data::load_manifest(ref.test_manifest);
      const data::DatasetStats st = data::compute_stats(s);
      json row;
      row["session"] = ref.name;
      row["train"] = split_json(st.train);
      row["test"] = split_json(st.test);
      rows.push_back(std::move(row));
      for (const auto* sp : {&st.train, &st.test}) {
        images += sp->images_authentic + sp->images_tampered;
        images_tampered += sp->images_tampered;
        texts += sp->instances_authentic + sp->instances_tampered;
        texts_tampered += sp->instances_tampered;
      }
    }
    out["sessions"] = std::move(rows);
    out["totals"]["images"] = images;
    out["totals"]["images_tampered"] = images_tampered;
    out["totals"]["texts"] = texts;
    out["totals"]["texts_tampered"] = texts_tampered;
  }
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return 0;
}

struct ValidateArgs {
  std::string manifest;
  bool pretty = false;
};

int run_validate(const ValidateArgs& a) {
  json resolved;
  resolved["subcommand"] = "validate";
  resolved["manifest"] = a.manifest;
  log_config(resolved);

  const data::ValidationReport report = data::validate_manifest(data::load_manifest(a.manifest));
  json out;
  json findings = json::array();
  for (const auto& f : report.findings) {
    json jf;
    jf["severity"] = f.severity == data::Finding::Severity::error ? "error" : "warning";
    jf["kind"] = f.kind;
    jf["message"] = f.message;
    findings.push_back(std::move(jf));
  }
  out["findings"] = std::move(findings);
  out["ok"] = report.ok();
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return report.ok() ? 0 : 1;
}

struct DistortArgs {
  std::string op = "jpeg75";
  std::string input, output, manifest, out_manifest;
  bool pretty = false;
};

int run_distort(const DistortArgs& a) {
  const eval::DistortKind kind = eval::distort_from_string(a.op);

  json resolved;
  resolved["subcommand"] = "distort";
  resolved["op"] = a.op;
  resolved["in"] = a.input;
  resolved["out"] = a.output;
  resolved["manifest"] = a.manifest;
  resolved["out_manifest"] = a.out_manifest;
  log_config(resolved);

  json out;
  if (!a.input.empty()) {
    if (a.output.empty()) throw ParamError("distort: --in requires --out");
    const img::Image im = img::load_image(a.input);
    const img::Image d = eval::distort(im, kind);
    img::save_image(d, a.output);
    out["width"] = d.width;
    out["height"] = d.height;
  }
  if (!a.manifest.empty()) {
    if (a.out_manifest.empty()) throw ParamError("distort: --manifest requires --out-manifest");
    data::save_manifest(eval::distort_geometry(data::load_manifest(a.manifest), kind),
                        a.out_manifest);
    out["manifest"] = a.out_manifest;
  }
  if (a.input.empty() && a.manifest.empty())
    throw ParamError("distort: nothing to do; pass --in and/or --manifest");
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return 0;
}

struct DafArgs {
  int dim = 8;
  int n = 16;
  std::uint64_t seed = 1;
  bool pretty = false;
};

daf::FeatureBatch random_batch(Eigen::Index dim, Eigen::Index n, Rng& rng) {
  daf::FeatureBatch b;
  b.roi.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) b.roi(i, j) = normal(rng);
  b.global = b.roi.colwise().mean();
  b.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) b.labels[i] = i >= n / 2;
  return b;
}

json grad_check_json(int dim, int n, std::uint64_t seed) {
  constexpr double kTolerance = 1e-5;
  double max_rel = 0.0;
  // A batch can land on a hinge or norm kink; re-sample a few times.
  for (int attempt = 0;; ++attempt) {
    Rng rng(mix64(seed, static_cast<std::uint64_t>(attempt)));
    const daf::FeatureBatch batch = random_batch(dim, n, rng);
    daf::DafParams params = daf::DafParams::random(dim, rng);
    try {
      max_rel = daf::grad_check(params, batch);
      break;
    } catch (const KinkError& e) {
      if (attempt >= 7) throw;
      log::warn("daf: ", e.what(), "; re-sampling");
    }
  }
  json j;
  j["dim"] = dim;
  j["n"] = n;
  j["seed"] = seed;
  j["max_rel_error"] = max_rel;
  j["tolerance"] = kTolerance;
  j["pass"] = max_rel < kTolerance;
  return j;
}

int run_daf_grad_check(const DafArgs& a) {
  json resolved;
  resolved["subcommand"] = "daf grad-check";
  resolved["dim"] = a.dim;
  resolved["n"] = a.n;
  resolved["seed"] = a.seed;
  log_config(resolved);

  const json out = grad_check_json(a.dim, a.n, a.seed);
  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return out["pass"].get<bool>() ? 0 : 1;
}

int run_daf_demo(const DafArgs& a) {
  json resolved;
  resolved["subcommand"] = "daf demo";
  resolved["dim"] = a.dim;
  resolved["n"] = a.n;
  resolved["seed"] = a.seed;
  log_config(resolved);

  json out;
  out["grad_check"] = grad_check_json(a.dim, a.n, a.seed);

  daf::ToyConfig cfg;
  cfg.seed = a.seed;
  const auto [params, report] = daf::train_toy(cfg);
  json toy;
  toy["dim"] = cfg.dim;
  toy["steps"] = cfg.steps;
  toy["lr"] = cfg.lr;
  toy["seed"] = cfg.seed;
  toy["kernel_gap"] = report.kernel_gap;
  toy["held_out_accuracy"] = report.accuracy;
  toy["dist_auth"] = report.dist_auth;
  toy["dist_tamp"] = report.dist_tamp;
  toy["final_loss"] = report.loss_curve.back();
  out["toy_training"] = std::move(toy);

  std::cout << out.dump(json_indent(a.pretty)) << '\n';
  return out["grad_check"]["pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::string log_level = "warn";
  if (const char* env = std::getenv("OSTF_LOG_LEVEL")) log_level = env;

  CLI::App app{"texture-jitter synthesis and tampered-text evaluation toolkit"};
  app.require_subcommand(1);
  app.add_option("--log-level", log_level, "debug|info|warn|error|off")
      ->capture_default_str();

  JitterArgs ja;
  auto* jit = app.add_subcommand("jitter", "synthesize texture-jittered training data");
  jit->add_option("--manifest", ja.manifest, "input manifest (JSON Lines)")->required();
  jit->add_option("--images", ja.images, "directory the manifest's image paths resolve against")
      ->required();
  jit->add_option("--out", ja.out, "output directory")->required();
  jit->add_option("--seed", ja.seed, "global seed")->required();
  jit->add_option("--config", ja.config, "intensity-bucket config JSON");
  jit->add_option("--prob", ja.prob, "override per-instance selection probability");
  jit->add_option("--threads", ja.threads, "worker count (0 = auto)");
  jit->add_flag("--pretty", ja.pretty, "indent JSON output");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "score one prediction file against one manifest");
  ev->add_option("--manifest", ea.manifest, "ground-truth manifest")->required();
  ev->add_option("--preds", ea.preds, "prediction file (JSON Lines)")->required();
  ev->add_option("--mode", ea.mode, "instance|pixel")->capture_default_str();
  ev->add_option("--iou", ea.iou, "instance matching IoU threshold")->capture_default_str();
  ev->add_option("--score-threshold", ea.score_threshold, "minimum prediction score")
      ->capture_default_str();
  ev->add_option("--distort", ea.distort, "none|jpeg75|resize0.5 (adjusts GT geometry)")
      ->capture_default_str();
  ev->add_option("--out", ea.out, "also write scores JSON here");
  ev->add_flag("--pretty", ea.pretty, "indent JSON output");

  MatrixArgs ma;
  auto* mx = app.add_subcommand("matrix", "9x9 cross-session evaluation matrix");
  mx->add_option("--sessions", ma.sessions, "session registry JSON")->required();
  mx->add_option("--preds", ma.preds,
                 "directory of <train>__<test>.jsonl prediction files, 81 in total")
      ->required();
  mx->add_option("--out", ma.out, "output directory for matrix JSON + CSV");
  mx->add_option("--mode", ma.mode, "instance|pixel")->capture_default_str();
  mx->add_option("--iou", ma.iou, "instance matching IoU threshold")->capture_default_str();
  mx->add_option("--score-threshold", ma.score_threshold, "minimum prediction score")
      ->capture_default_str();
  mx->add_option("--distort", ma.distort, "none|jpeg75|resize0.5 (adjusts GT geometry)")
      ->capture_default_str();
  mx->add_option("--threads", ma.threads, "worker count (0 = auto)");
  mx->add_flag("--pretty", ma.pretty, "indent JSON output");

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "image and instance counts by label");
  st->add_option("--manifest", sa.manifest, "single manifest");
  st->add_option("--sessions", sa.sessions, "session registry JSON (per-session + totals)");
  st->add_flag("--pretty", sa.pretty, "indent JSON output");

  ValidateArgs va;
  auto* vd = app.add_subcommand("validate", "check a manifest for structural problems");
  vd->add_option("--manifest", va.manifest, "manifest to check")->required();
  vd->add_flag("--pretty", va.pretty, "indent JSON output");

  DistortArgs da;
  auto* di = app.add_subcommand("distort", "apply a robustness distortion");
  di->add_option("--op", da.op, "jpeg75|resize0.5")->capture_default_str();
  di->add_option("--in", da.input, "input image");
  di->add_option("--out", da.output, "output image");
  di->add_option("--manifest", da.manifest, "manifest whose geometry should follow the distortion");
  di->add_option("--out-manifest", da.out_manifest, "where to write the adjusted manifest");
  di->add_flag("--pretty", da.pretty, "indent JSON output");

  DafArgs dfa;
  auto* df = app.add_subcommand("daf", "difference-aware forensics numerical core");
  df->require_subcommand(1);
  auto* dfc = df->add_subcommand("grad-check", "verify analytic gradients by finite differences");
  dfc->add_option("--dim", dfa.dim, "feature dimension")->capture_default_str();
  dfc->add_option("--n", dfa.n, "batch size")->capture_default_str();
  dfc->add_option("--seed", dfa.seed, "rng seed")->capture_default_str();
  dfc->add_flag("--pretty", dfa.pretty, "indent JSON output");
  auto* dfd = df->add_subcommand("demo", "gradient check plus toy training report");
  dfd->add_option("--dim", dfa.dim, "gradient-check feature dimension")->capture_default_str();
  dfd->add_option("--n", dfa.n, "gradient-check batch size")->capture_default_str();
  dfd->add_option("--seed", dfa.seed, "rng seed")->capture_default_str();
  dfd->add_flag("--pretty", dfa.pretty, "indent JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    log::set_level(log_level);
    if (app.got_subcommand(jit)) return run_jitter(ja);
    if (app.got_subcommand(ev)) return run_eval(ea);
    if (app.got_subcommand(mx)) return run_matrix(ma);
    if (app.got_subcommand(st)) return run_stats(sa);
    if (app.got_subcommand(vd)) return run_validate(va);
    if (app.got_subcommand(di)) return run_distort(da);
    if (app.got_subcommand(df)) {
      if (df->got_subcommand(dfc)) return run_daf_grad_check(dfa);
      return run_daf_demo(dfa);
    }
    return 2;
  } catch (const ParamError& e) {
    log::error("cli: ", e.what());
    return 2;
  } catch (const std::exception& e) {
    log::error("cli: ", e.what());
    return 1;
  }
}
