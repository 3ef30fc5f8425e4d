#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ostf/image.hpp"

namespace ostf::data {

enum class Label { authentic, tampered };

const char* to_string(Label l);
Label label_from_string(std::string_view s);

// Axis-aligned box in continuous pixel coordinates.
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;
  double area() const { return w * h; }
  double x1() const { return x + w; }
  double y1() const { return y + h; }
};

double iou(const Rect& a, const Rect& b);

// Rounds outward to whole pixels and clamps to the image raster.
img::IRect to_pixel_rect(const Rect& r, int image_w, int image_h);

// One annotated text region. The quad is stored as given (rows are clockwise
// corners); the axis-aligned bbox is derived on demand.
struct TextInstance {
  Eigen::Matrix<double, 4, 2> quad;
  Label label = Label::authentic;
  std::optional<std::string> transcription;

  Rect bbox() const;
  static TextInstance from_quad(const Eigen::Matrix<double, 4, 2>& q, Label label = Label::authentic,
                                std::optional<std::string> transcription = std::nullopt);
  static TextInstance from_rect(const Rect& r, Label label = Label::authentic,
                                std::optional<std::string> transcription = std::nullopt);
};

struct ImageRecord {
  std::string image;  // path, unique within a manifest
  int width = 0;
  int height = 0;
  std::vector<TextInstance> instances;
};

struct Manifest {
  std::vector<ImageRecord> records;
  std::map<std::string, std::string> metadata;
};

inline constexpr int kManifestVersion = 1;

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

// ICDAR-style ground truth: one text file per image, lines of
// "x1,y1,x2,y2,x3,y3,x4,y4,transcription" or "x1,y1,x2,y2,transcription".
// All imported instances are labeled authentic; malformed lines are skipped
// with a warning.
Manifest import_icdar_gt(const std::filesystem::path& gt_dir, const std::filesystem::path& images_dir);

struct SplitStats {
  int images_authentic = 0;
  int images_tampered = 0;
  long instances_authentic = 0;
  long instances_tampered = 0;
};

struct DatasetStats {
  SplitStats train;
  SplitStats test;
};

SplitStats manifest_stats(const Manifest& m);

struct Session {
  std::string name;
  std::string tampering_method;
  std::string source_dataset;
  Manifest train_manifest;
  Manifest test_manifest;
};

DatasetStats compute_stats(const Session& s);

struct Finding {
  enum class Severity { warning, error };
  Severity severity = Severity::error;
  std::string kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const;
};

ValidationReport validate_manifest(const Manifest& m);

// The nine canonical benchmark sessions, in table order.
const std::array<std::string, 9>& canonical_sessions();

struct SessionRef {
  std::string name;
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

// Registry file: JSON mapping the nine session names to manifest paths.
std::vector<SessionRef> load_session_registry(const std::filesystem::path& path);
void save_session_registry(const std::vector<SessionRef>& sessions, const std::filesystem::path& path);

}  // namespace ostf::data
