#include "ostf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ostf/errors.hpp"
#include "ostf/image_io.hpp"
#include "ostf/log.hpp"

namespace ostf::data {

using nlohmann::json;

const char* to_string(Label l) { return l == Label::authentic ? "authentic" : "tampered"; }

Label label_from_string(std::string_view s) {
  if (s == "authentic") return Label::authentic;
  if (s == "tampered") return Label::tampered;
  throw ParamError("unknown label: " + std::string(s));
}

double iou(const Rect& a, const Rect& b) {
  const double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

img::IRect to_pixel_rect(const Rect& r, int image_w, int image_h) {
  int x0 = static_cast<int>(std::floor(r.x));
  int y0 = static_cast<int>(std::floor(r.y));
  int x1 = static_cast<int>(std::ceil(r.x + r.w));
  int y1 = static_cast<int>(std::ceil(r.y + r.h));
  x0 = std::clamp(x0, 0, image_w);
  y0 = std::clamp(y0, 0, image_h);
  x1 = std::clamp(x1, x0, image_w);
  y1 = std::clamp(y1, y0, image_h);
  return {x0, y0, x1 - x0, y1 - y0};
}

Rect TextInstance::bbox() const {
  const double x0 = quad.col(0).minCoeff();
  const double y0 = quad.col(1).minCoeff();
  return {x0, y0, quad.col(0).maxCoeff() - x0, quad.col(1).maxCoeff() - y0};
}

TextInstance TextInstance::from_quad(const Eigen::Matrix<double, 4, 2>& q, Label label,
                                     std::optional<std::string> transcription) {
  TextInstance t;
  t.quad = q;
  t.label = label;
  t.transcription = std::move(transcription);
  return t;
}

TextInstance TextInstance::from_rect(const Rect& r, Label label,
                                     std::optional<std::string> transcription) {
  Eigen::Matrix<double, 4, 2> q;
  q << r.x, r.y, r.x + r.w, r.y, r.x + r.w, r.y + r.h, r.x, r.y + r.h;
  return from_quad(q, label, std::move(transcription));
}

namespace {

json instance_to_json(const TextInstance& t) {
  json j;
  json quad = json::array();
  for (int i = 0; i < 4; ++i) quad.push_back({t.quad(i, 0), t.quad(i, 1)});
  j["quad"] = quad;
  j["label"] = to_string(t.label);
  if (t.transcription) j["transcription"] = *t.transcription;
  return j;
}

TextInstance instance_from_json(const json& j) {
  TextInstance t;
  if (j.contains("quad")) {
    const auto& q = j.at("quad");
    if (q.size() != 4) throw ParamError("quad must have 4 points");
    for (int i = 0; i < 4; ++i) {
      t.quad(i, 0) = q[i][0].get<double>();
      t.quad(i, 1) = q[i][1].get<double>();
    }
  } else if (j.contains("bbox")) {
    const auto& b = j.at("bbox");
    const Rect r{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    t = TextInstance::from_rect(r);
  } else {
    throw ParamError("instance needs quad or bbox");
  }
  t.label = label_from_string(j.value("label", "authentic"));
  if (j.contains("transcription")) t.transcription = j.at("transcription").get<std::string>();
  return t;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParamError(path.string() + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    if (first && j.contains("manifest_version")) {
      const int v = j.at("manifest_version").get<int>();
      if (v != kManifestVersion)
        throw ParamError("unsupported manifest version " + std::to_string(v));
      if (j.contains("metadata"))
        for (const auto& [k, val] : j.at("metadata").items()) m.metadata[k] = val.get<std::string>();
      first = false;
      continue;
    }
    first = false;
    ImageRecord rec;
    rec.image = j.at("image").get<std::string>();
    rec.width = j.at("width").get<int>();
    rec.height = j.at("height").get<int>();
    for (const auto& ji : j.value("instances", json::array())) rec.instances.push_back(instance_from_json(ji));
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  json header;
  header["manifest_version"] = kManifestVersion;
  header["metadata"] = m.metadata;
  out << header.dump() << "\n";
  for (const ImageRecord& rec : m.records) {
    json j;
    j["image"] = rec.image;
    j["width"] = rec.width;
    j["height"] = rec.height;
    json insts = json::array();
    for (const TextInstance& t : rec.instances) insts.push_back(instance_to_json(t));
    j["instances"] = insts;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

namespace {

// "12, 34" tokens: numeric prefix determines the box form.
bool parse_double(const std::string& s, double& out) {
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (...) {
    return false;
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return pos == s.size();
}

std::optional<TextInstance> parse_icdar_line(const std::string& line) {
  std::vector<std::string> tokens;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) tokens.push_back(cur);
  std::vector<double> nums;
  std::size_t i = 0;
  for (; i < tokens.size() && nums.size() < 8; ++i) {
    double v;
    if (!parse_double(tokens[i], v)) break;
    nums.push_back(v);
  }
  auto rest = [&](std::size_t from) -> std::optional<std::string> {
    if (from >= tokens.size()) return std::nullopt;
    std::string t = tokens[from];
    for (std::size_t k = from + 1; k < tokens.size(); ++k) t += "," + tokens[k];
    // strip the quotes some ground-truth files carry
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
    return t;
  };
  if (nums.size() >= 8) {
    Eigen::Matrix<double, 4, 2> q;
    for (int k = 0; k < 4; ++k) {
      q(k, 0) = nums[2 * k];
      q(k, 1) = nums[2 * k + 1];
    }
    return TextInstance::from_quad(q, Label::authentic, rest(8));
  }
  if (nums.size() >= 4) {
    const double x0 = std::min(nums[0], nums[2]);
    const double y0 = std::min(nums[1], nums[3]);
    const Rect r{x0, y0, std::abs(nums[2] - nums[0]), std::abs(nums[3] - nums[1])};
    return TextInstance::from_rect(r, Label::authentic, rest(4));
  }
  return std::nullopt;
}

std::optional<std::filesystem::path> find_image_for(const std::filesystem::path& images_dir,
                                                    const std::string& stem) {
  static const char* exts[] = {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"};
  for (const char* e : exts) {
    const auto p = images_dir / (stem + e);
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

Manifest import_icdar_gt(const std::filesystem::path& gt_dir, const std::filesystem::path& images_dir) {
  if (!std::filesystem::is_directory(gt_dir)) throw IoError("not a directory: " + gt_dir.string());
  std::vector<std::filesystem::path> gt_files;
  for (const auto& entry : std::filesystem::directory_iterator(gt_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt") gt_files.push_back(entry.path());
  std::sort(gt_files.begin(), gt_files.end());

  Manifest m;
  for (const auto& gt : gt_files) {
    std::string stem = gt.stem().string();
    if (stem.rfind("gt_", 0) == 0) stem = stem.substr(3);
    const auto img_path = find_image_for(images_dir, stem);
    if (!img_path) {
      log::warn("no image for ground truth ", gt.string());
      continue;
    }
    ImageRecord rec;
    rec.image = img_path->string();
    const auto [w, h] = img::read_image_size(*img_path);
    rec.width = w;
    rec.height = h;
    std::ifstream in(gt);
    if (!in) throw IoError("cannot open " + gt.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      // some files open with a UTF-8 BOM
      if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xef\xbb\xbf") == 0) line = line.substr(3);
      if (line.empty()) continue;
      if (auto inst = parse_icdar_line(line)) {
        rec.instances.push_back(std::move(*inst));
      } else {
        log::warn(gt.string(), ":", lineno, ": malformed line skipped");
      }
    }
    m.records.push_back(std::move(rec));
  }
  if (m.records.empty()) throw ParamError("no parseable ground-truth records in " + gt_dir.string());
  return m;
}

SplitStats manifest_stats(const Manifest& m) {
  SplitStats s;
  for (const ImageRecord& rec : m.records) {
    bool any_tampered = false;
    for (const TextInstance& t : rec.instances) {
      if (t.label == Label::tampered) {
        ++s.instances_tampered;
        any_tampered = true;
      } else {
        ++s.instances_authentic;
      }
    }
    (any_tampered ? s.images_tampered : s.images_authentic) += 1;
  }
  return s;
}

DatasetStats compute_stats(const Session& s) {
  return {manifest_stats(s.train_manifest), manifest_stats(s.test_manifest)};
}

bool ValidationReport::ok() const {
  return std::none_of(findings.begin(), findings.end(),
                      [](const Finding& f) { return f.severity == Finding::Severity::error; });
}

ValidationReport validate_manifest(const Manifest& m) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const ImageRecord& rec : m.records) {
    if (!seen.insert(rec.image).second)
      report.findings.push_back({Finding::Severity::error, "duplicate_path", rec.image});
    for (std::size_t i = 0; i < rec.instances.size(); ++i) {
      const Rect b = rec.instances[i].bbox();
      const std::string where = rec.image + "[" + std::to_string(i) + "]";
      if (b.w < 1.0 || b.h < 1.0)
        report.findings.push_back({Finding::Severity::error, "degenerate_instance", where});
      if (b.x < 0 || b.y < 0 || b.x1() > rec.width || b.y1() > rec.height)
        report.findings.push_back({Finding::Severity::error, "out_of_bounds", where});
    }
  }
  return report;
}

const std::array<std::string, 9>& canonical_sessions() {
  static const std::array<std::string, 9> names = {
      "DST",     "SRNet",         "STEFANN",           "MOSTEL",      "DiffSTE",
      "AnyText", "UDiffText_IC13", "UDiffText_TextOCR", "TextDiffuser"};
  return names;
}

std::vector<SessionRef> load_session_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open session registry " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParamError("bad registry JSON: " + std::string(e.what()));
  }
  std::vector<SessionRef> out;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  for (const auto& js : j.at("sessions")) {
    SessionRef ref;
    ref.name = js.at("name").get<std::string>();
    ref.train_manifest = resolve(js.at("train_manifest").get<std::string>());
    ref.test_manifest = resolve(js.at("test_manifest").get<std::string>());
    out.push_back(std::move(ref));
  }
  std::set<std::string> names;
  for (const auto& ref : out) names.insert(ref.name);
  for (const auto& want : canonical_sessions())
    if (!names.count(want)) throw ConfigError("registry missing canonical session: " + want);
  if (out.size() != canonical_sessions().size())
    throw ConfigError("registry must list exactly the 9 canonical sessions");
  return out;
}

void save_session_registry(const std::vector<SessionRef>& sessions, const std::filesystem::path& path) {
  json j;
  j["sessions"] = json::array();
  for (const auto& s : sessions)
    j["sessions"].push_back({{"name", s.name},
                             {"train_manifest", s.train_manifest.string()},
                             {"test_manifest", s.test_manifest.string()}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write registry " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace ostf::data
