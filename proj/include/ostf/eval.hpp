#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ostf/dataset.hpp"
#include "ostf/image.hpp"

namespace ostf::eval {

using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class PredClass { real, tampered };

const char* to_string(PredClass c);
PredClass pred_class_from_string(std::string_view s);

struct Prediction {
  data::Rect bbox;
  PredClass cls = PredClass::real;
  double score = 0.0;
};

struct PredictionSet {
  std::string image;
  std::vector<Prediction> preds;
};

// Percent-scale scores (0..100).
struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> iou;
};

double f1_from(double precision, double recall);

// Fills each box with score >= threshold into the map of its class;
// overlaps saturate at 1.
std::pair<Mask, Mask> rasterize_boxes(const std::vector<Prediction>& preds, int width, int height,
                                      double score_threshold);

ClassScores pixel_metrics(const Mask& pred, const Mask& gt);

// Accumulates pixel confusion counts across images (micro-averaged metrics).
struct PixelTally {
  long long tp = 0, fp = 0, fn = 0;
  void add(const Mask& pred, const Mask& gt);
  ClassScores scores() const;
};

// Greedy one-to-one matching at the given IoU threshold. Ties at equal score
// keep input order; ties at equal IoU take the earliest ground truth.
struct InstanceTally {
  long long tp = 0, n_preds = 0, n_gts = 0;
  void add(const std::vector<Prediction>& preds, const std::vector<data::TextInstance>& gts,
           double iou_threshold, PredClass cls);
  ClassScores scores() const;
};

ClassScores instance_metrics(const std::vector<Prediction>& preds,
                             const std::vector<data::TextInstance>& gts, double iou_threshold,
                             PredClass cls);

struct CellScores {
  ClassScores real;
  ClassScores tampered;
};

struct Aggregates {
  ClassScores real;       // mP, mR, mF stored in precision/recall/f1
  ClassScores tampered;
  double overall_mf = 0.0;
};

struct EvalMatrix {
  std::vector<std::string> sessions;  // canonical order
  // key: (train session, test session)
  std::map<std::pair<std::string, std::string>, CellScores> cells;
  Aggregates aggregates;
};

// All 81 cells must be present; missing pairs raise AggregationError.
EvalMatrix aggregate_matrix(const std::vector<std::string>& sessions,
                            const std::map<std::pair<std::string, std::string>, CellScores>& cells);

enum class DistortKind { none, jpeg75, resize_half };

DistortKind distort_from_string(std::string_view s);
img::Image distort(const img::Image& im, DistortKind kind);

// Geometry adjustment that pairs with the pixel distortion: resize_half
// scales boxes by the realized output/input ratios; jpeg75 leaves them alone.
data::Manifest distort_geometry(const data::Manifest& m, DistortKind kind);

// Prediction files: JSON Lines, one record per image.
std::vector<PredictionSet> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::vector<PredictionSet>& preds, const std::filesystem::path& path);

enum class Mode { instance, pixel };
Mode mode_from_string(std::string_view s);

struct EvalOptions {
  Mode mode = Mode::instance;
  double iou_threshold = 0.5;
  double score_threshold = 0.5;
  DistortKind distort = DistortKind::none;
};

// Scores one prediction file against one manifest (both classes).
CellScores evaluate_pair(const std::vector<PredictionSet>& preds, const data::Manifest& gt,
                         const EvalOptions& opts);

void write_matrix_json(const EvalMatrix& m, const std::filesystem::path& path);
// One CSV per class: rows = train sessions, cols = test sessions, values = F1.
void write_matrix_csv(const EvalMatrix& m, const std::filesystem::path& real_csv,
                      const std::filesystem::path& tampered_csv);

}  // namespace ostf::eval
