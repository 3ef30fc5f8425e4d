#include "ostf/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ostf/errors.hpp"
#include "ostf/filters.hpp"

namespace ostf::eval {

using nlohmann::json;

const char* to_string(PredClass c) { return c == PredClass::real ? "real" : "tampered"; }

PredClass pred_class_from_string(std::string_view s) {
  if (s == "real") return PredClass::real;
  if (s == "tampered") return PredClass::tampered;
  throw ParamError("unknown prediction class: " + std::string(s));
}

double f1_from(double precision, double recall) {
  const double denom = precision + recall;
  if (denom <= 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

std::pair<Mask, Mask> rasterize_boxes(const std::vector<Prediction>& preds, int width, int height,
                                      double score_threshold) {
  if (width < 1 || height < 1) throw ParamError("rasterize_boxes: empty canvas");
  Mask real = Mask::Zero(height, width);
  Mask tampered = Mask::Zero(height, width);
  for (const auto& p : preds) {
    if (p.score < score_threshold) continue;
    const auto r = data::to_pixel_rect(p.bbox, width, height);
    if (r.w <= 0 || r.h <= 0) continue;
    Mask& m = p.cls == PredClass::real ? real : tampered;
    m.block(r.y, r.x, r.h, r.w).setConstant(1);
  }
  return {std::move(real), std::move(tampered)};
}

namespace {

ClassScores scores_from_counts(long long tp, long long fp, long long fn, bool with_iou) {
  ClassScores s;
  const long long np = tp + fp;
  const long long ng = tp + fn;
  s.precision = np > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(np) : 0.0;
  s.recall = ng > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(ng) : 0.0;
  s.f1 = f1_from(s.precision, s.recall);
  if (with_iou) {
    const long long uni = tp + fp + fn;
    // Two empty masks agree perfectly.
    s.iou = uni > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(uni) : 100.0;
  }
  return s;
}

}  // namespace

ClassScores pixel_metrics(const Mask& pred, const Mask& gt) {
  PixelTally t;
  t.add(pred, gt);
  return t.scores();
}

void PixelTally::add(const Mask& pred, const Mask& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ParamError("pixel_metrics: mask shapes differ");
  for (Eigen::Index r = 0; r < pred.rows(); ++r)
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const bool p = pred(r, c) != 0;
      const bool g = gt(r, c) != 0;
      if (p && g)
        ++tp;
      else if (p)
        ++fp;
      else if (g)
        ++fn;
    }
}

ClassScores PixelTally::scores() const { return scores_from_counts(tp, fp, fn, true); }

void InstanceTally::add(const std::vector<Prediction>& preds,
                        const std::vector<data::TextInstance>& gts, double iou_threshold,
                        PredClass cls) {
  const data::Label want = cls == PredClass::real ? data::Label::authentic : data::Label::tampered;
  std::vector<std::size_t> pred_idx;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].cls == cls) pred_idx.push_back(i);
  std::vector<std::size_t> gt_idx;
  for (std::size_t i = 0; i < gts.size(); ++i)
    if (gts[i].label == want) gt_idx.push_back(i);

  n_preds += static_cast<long long>(pred_idx.size());
  n_gts += static_cast<long long>(gt_idx.size());

  // Highest score first; equal scores keep input order.
  std::stable_sort(pred_idx.begin(), pred_idx.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

  std::vector<bool> taken(gt_idx.size(), false);
  for (const std::size_t pi : pred_idx) {
    double best = iou_threshold;
    std::ptrdiff_t best_gt = -1;
    for (std::size_t k = 0; k < gt_idx.size(); ++k) {
      if (taken[k]) continue;
      const double v = data::iou(preds[pi].bbox, gts[gt_idx[k]].bbox());
      if (v >= best && (best_gt < 0 || v > best)) {
        best = v;
        best_gt = static_cast<std::ptrdiff_t>(k);
      }
    }
    if (best_gt >= 0) {
      taken[static_cast<std::size_t>(best_gt)] = true;
      ++tp;
    }
  }
}

ClassScores InstanceTally::scores() const {
  return scores_from_counts(tp, n_preds - tp, n_gts - tp, false);
}

ClassScores instance_metrics(const std::vector<Prediction>& preds,
                             const std::vector<data::TextInstance>& gts, double iou_threshold,
                             PredClass cls) {
  InstanceTally t;
  t.add(preds, gts, iou_threshold, cls);
  return t.scores();
}

EvalMatrix aggregate_matrix(
    const std::vector<std::string>& sessions,
    const std::map<std::pair<std::string, std::string>, CellScores>& cells) {
  EvalMatrix m;
  m.sessions = sessions;
  for (const auto& train : sessions)
    for (const auto& test : sessions) {
      const auto it = cells.find({train, test});
      if (it == cells.end())
        throw AggregationError("missing cell: train=" + train + " test=" + test);
      m.cells.emplace(it->first, it->second);
    }

  const double n = static_cast<double>(sessions.size()) * static_cast<double>(sessions.size());
  auto mean_of = [&](auto pick) {
    double s = 0.0;
    for (const auto& [key, cell] : m.cells) s += pick(cell);
    return s / n;
  };
  m.aggregates.real.precision = mean_of([](const CellScores& c) { return c.real.precision; });
  m.aggregates.real.recall = mean_of([](const CellScores& c) { return c.real.recall; });
  m.aggregates.real.f1 = mean_of([](const CellScores& c) { return c.real.f1; });
  m.aggregates.tampered.precision =
      mean_of([](const CellScores& c) { return c.tampered.precision; });
  m.aggregates.tampered.recall = mean_of([](const CellScores& c) { return c.tampered.recall; });
  m.aggregates.tampered.f1 = mean_of([](const CellScores& c) { return c.tampered.f1; });
  m.aggregates.overall_mf = 0.5 * (m.aggregates.real.f1 + m.aggregates.tampered.f1);
  return m;
}

DistortKind distort_from_string(std::string_view s) {
  if (s == "none") return DistortKind::none;
  if (s == "jpeg75") return DistortKind::jpeg75;
  if (s == "resize0.5" || s == "resize_half") return DistortKind::resize_half;
  throw ParamError("unknown distortion: " + std::string(s));
}

img::Image distort(const img::Image& im, DistortKind kind) {
  switch (kind) {
    case DistortKind::none:
      return im;
    case DistortKind::jpeg75:
      return img::jpeg_roundtrip(im, 75);
    case DistortKind::resize_half: {
      const int ow = (im.width + 1) / 2;
      const int oh = (im.height + 1) / 2;
      return img::resize_bilinear(im, ow, oh);
    }
  }
  throw ParamError("unknown distortion kind");
}

data::Manifest distort_geometry(const data::Manifest& m, DistortKind kind) {
  if (kind != DistortKind::resize_half) return m;
  data::Manifest out = m;
  for (auto& rec : out.records) {
    const int ow = (rec.width + 1) / 2;
    const int oh = (rec.height + 1) / 2;
    const double sx = static_cast<double>(ow) / static_cast<double>(rec.width);
    const double sy = static_cast<double>(oh) / static_cast<double>(rec.height);
    for (auto& inst : rec.instances) {
      inst.quad.col(0) *= sx;
      inst.quad.col(1) *= sy;
    }
    rec.width = ow;
    rec.height = oh;
  }
  return out;
}

std::vector<PredictionSet> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions: " + path.string());
  std::vector<PredictionSet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    PredictionSet ps;
    ps.image = j.at("image").get<std::string>();
    for (const auto& jp : j.value("preds", json::array())) {
      Prediction p;
      const auto& b = jp.at("bbox");
      p.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                b.at(3).get<double>()};
      p.cls = pred_class_from_string(jp.at("class").get<std::string>());
      p.score = jp.value("score", 1.0);
      ps.preds.push_back(p);
    }
    out.push_back(std::move(ps));
  }
  return out;
}

void save_predictions(const std::vector<PredictionSet>& preds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions: " + path.string());
  for (const auto& ps : preds) {
    json j;
    j["image"] = ps.image;
    json arr = json::array();
    for (const auto& p : ps.preds) {
      json jp;
      jp["bbox"] = {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h};
      jp["class"] = to_string(p.cls);
      jp["score"] = p.score;
      arr.push_back(std::move(jp));
    }
    j["preds"] = std::move(arr);
    out << j.dump() << '\n';
  }
}

Mode mode_from_string(std::string_view s) {
  if (s == "instance") return Mode::instance;
  if (s == "pixel") return Mode::pixel;
  throw ParamError("unknown eval mode: " + std::string(s));
}

CellScores evaluate_pair(const std::vector<PredictionSet>& preds, const data::Manifest& gt,
                         const EvalOptions& opts) {
  std::map<std::string, const PredictionSet*> by_image;
  for (const auto& ps : preds) by_image[ps.image] = &ps;
  static const std::vector<Prediction> kNoPreds;

  CellScores cell;
  if (opts.mode == Mode::instance) {
    InstanceTally real, tamp;
    for (const auto& rec : gt.records) {
      const auto it = by_image.find(rec.image);
      const auto& p = it != by_image.end() ? it->second->preds : kNoPreds;
      std::vector<Prediction> kept;
      for (const auto& pr : p)
        if (pr.score >= opts.score_threshold) kept.push_back(pr);
      real.add(kept, rec.instances, opts.iou_threshold, PredClass::real);
      tamp.add(kept, rec.instances, opts.iou_threshold, PredClass::tampered);
    }
    cell.real = real.scores();
    cell.tampered = tamp.scores();
  } else {
    PixelTally real, tamp;
    for (const auto& rec : gt.records) {
      const auto it = by_image.find(rec.image);
      const auto& p = it != by_image.end() ? it->second->preds : kNoPreds;
      auto [pred_real, pred_tamp] = rasterize_boxes(p, rec.width, rec.height,
                                                    opts.score_threshold);
      std::vector<Prediction> gt_boxes;
      for (const auto& inst : rec.instances) {
        Prediction g;
        g.bbox = inst.bbox();
        g.cls = inst.label == data::Label::authentic ? PredClass::real : PredClass::tampered;
        g.score = 1.0;
        gt_boxes.push_back(g);
      }
      auto [gt_real, gt_tamp] = rasterize_boxes(gt_boxes, rec.width, rec.height, 0.0);
      real.add(pred_real, gt_real);
      tamp.add(pred_tamp, gt_tamp);
    }
    cell.real = real.scores();
    cell.tampered = tamp.scores();
  }
  return cell;
}

namespace {

json scores_to_json(const ClassScores& s) {
  json j;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  if (s.iou) j["iou"] = *s.iou;
  return j;
}

}  // namespace

void write_matrix_json(const EvalMatrix& m, const std::filesystem::path& path) {
  json j;
  j["sessions"] = m.sessions;
  json cells = json::array();
  for (const auto& [key, cell] : m.cells) {
    json jc;
    jc["train"] = key.first;
    jc["test"] = key.second;
    jc["real"] = scores_to_json(cell.real);
    jc["tampered"] = scores_to_json(cell.tampered);
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  j["aggregates"]["real"] = scores_to_json(m.aggregates.real);
  j["aggregates"]["tampered"] = scores_to_json(m.aggregates.tampered);
  j["aggregates"]["overall_mf"] = m.aggregates.overall_mf;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix: " + path.string());
  out << j.dump(2) << '\n';
}

void write_matrix_csv(const EvalMatrix& m, const std::filesystem::path& real_csv,
                      const std::filesystem::path& tampered_csv) {
  auto write_one = [&](const std::filesystem::path& path, auto pick) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write matrix csv: " + path.string());
    out << "train";
    for (const auto& s : m.sessions) out << ',' << s;
    out << '\n';
    for (const auto& train : m.sessions) {
      out << train;
      for (const auto& test : m.sessions) out << ',' << pick(m.cells.at({train, test}));
      out << '\n';
    }
  };
  write_one(real_csv, [](const CellScores& c) { return c.real.f1; });
  write_one(tampered_csv, [](const CellScores& c) { return c.tampered.f1; });
}

}  // namespace ostf::eval
