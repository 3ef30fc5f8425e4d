#pragma once

// Shared test fixtures: scratch directories, synthetic images, and manifests
// built to the published per-session statistics.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "ostf/dataset.hpp"
#include "ostf/image.hpp"
#include "ostf/image_io.hpp"

namespace fx {

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    const auto tag = std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1));
    path = std::filesystem::temp_directory_path() / ("ostf-test-" + tag);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// Smooth color gradients plus mild pixel noise. The macro structure keeps
// texture ops in the subtle-difference band; pure noise would blow past it.
inline ostf::img::Image textured_image(int w, int h, std::uint64_t seed, int noise_amp = 16) {
  std::mt19937_64 rng(seed);
  ostf::img::Image im(w, h);
  const double px = 0.5 + (rng() % 100) / 100.0;
  const double py = 0.5 + (rng() % 100) / 100.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double base = 128.0 + 70.0 * std::sin(2.0 * 3.14159265358979 *
                                                    (px * x / 40.0 + py * y / 53.0 + 0.3 * c));
        const double noise =
            noise_amp > 0 ? static_cast<double>(rng() % (2 * noise_amp + 1)) - noise_amp : 0.0;
        im.at(x, y, c) = ostf::img::quantize(base + noise);
      }
  return im;
}

inline ostf::img::Image noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ostf::img::Image im(w, h);
  for (auto& b : im.data) b = static_cast<std::uint8_t>(rng() & 0xFF);
  return im;
}

// Per-split image and instance counts for one benchmark session.
struct SplitCounts {
  int img_auth = 0;
  int img_tamp = 0;
  long inst_auth = 0;
  long inst_tamp = 0;
};

struct SessionCounts {
  const char* name;
  SplitCounts train;
  SplitCounts test;
};

// The nine published sessions: images (authentic, tampered) and text
// instances (authentic, tampered) per split.
inline const std::array<SessionCounts, 9>& session_counts() {
  static const std::array<SessionCounts, 9> rows = {{
      {"DST", {72, 157, 382, 467}, {82, 151, 588, 507}},
      {"SRNet", {29, 200, 342, 507}, {55, 178, 607, 488}},
      {"STEFANN", {182, 47, 721, 128}, {181, 52, 946, 149}},
      {"MOSTEL", {168, 61, 628, 221}, {172, 61, 882, 213}},
      {"DiffSTE", {174, 55, 683, 166}, {181, 52, 943, 152}},
      {"AnyText", {181, 48, 715, 134}, {191, 42, 974, 121}},
      {"UDiffText_IC13", {129, 100, 471, 378}, {132, 101, 772, 323}},
      {"UDiffText_TextOCR", {196, 218, 23737, 419}, {233, 211, 22886, 399}},
      {"TextDiffuser", {40, 123, 2048, 123}, {40, 123, 1515, 123}},
  }};
  return rows;
}

// Expected corpus-wide totals implied by the table above.
inline constexpr int kTotalImages = 4418;
inline constexpr int kTotalTamperedImages = 1980;
inline constexpr long kTotalInstances = 64858;
inline constexpr long kTotalTamperedInstances = 5018;

// Builds an in-memory manifest hitting the given counts exactly: tampered
// instances go one per tampered image with the surplus on the first, and
// authentic instances spread evenly over the authentic images.
inline ostf::data::Manifest build_split_manifest(const SplitCounts& c, const std::string& prefix) {
  using namespace ostf::data;
  Manifest m;
  auto box = [](long k) {
    return Rect{static_cast<double>(5 * (k % 100)), static_cast<double>(4 * ((k / 100) % 100)), 20,
                10};
  };
  for (int i = 0; i < c.img_tamp; ++i) {
    ImageRecord rec;
    rec.image = prefix + "/tamp_" + std::to_string(i) + ".png";
    rec.width = 640;
    rec.height = 480;
    long count = 1;
    if (i == 0) count += c.inst_tamp - c.img_tamp;
    for (long k = 0; k < count; ++k)
      rec.instances.push_back(TextInstance::from_rect(box(k), Label::tampered));
    m.records.push_back(std::move(rec));
  }
  for (int i = 0; i < c.img_auth; ++i) {
    ImageRecord rec;
    rec.image = prefix + "/auth_" + std::to_string(i) + ".png";
    rec.width = 640;
    rec.height = 480;
    long count = c.inst_auth / c.img_auth;
    if (i < c.inst_auth % c.img_auth) ++count;
    for (long k = 0; k < count; ++k)
      rec.instances.push_back(TextInstance::from_rect(box(k), Label::authentic));
    m.records.push_back(std::move(rec));
  }
  return m;
}

inline ostf::data::Session build_session(const SessionCounts& row) {
  ostf::data::Session s;
  s.name = row.name;
  s.tampering_method = row.name;
  s.source_dataset = "fixture";
  s.train_manifest = build_split_manifest(row.train, std::string(row.name) + "/train");
  s.test_manifest = build_split_manifest(row.test, std::string(row.name) + "/test");
  return s;
}

// Writes n textured PNGs with non-overlapping text boxes and the matching
// manifest under dir. Non-overlap lets a recorded crop difference be
// re-measured against the source image alone.
inline ostf::data::Manifest write_jitter_fixture(const std::filesystem::path& dir, int n_images,
                                                 std::uint64_t seed, int img_w = 128,
                                                 int img_h = 128) {
  using namespace ostf;
  std::filesystem::create_directories(dir / "images");
  data::Manifest m;
  for (int i = 0; i < n_images; ++i) {
    const img::Image im = textured_image(img_w, img_h, seed + static_cast<std::uint64_t>(i));
    const std::string name = "img_" + std::to_string(i) + ".png";
    img::save_png(im, dir / "images" / name);

    data::ImageRecord rec;
    rec.image = name;
    rec.width = img_w;
    rec.height = img_h;
    std::vector<data::Rect> boxes;
    switch (i % 3) {
      case 0:
        boxes = {{8, 8, 40, 24}, {64, 16, 48, 40}, {16, 72, 96, 36}};
        break;
      case 1:
        boxes = {{16, 16, 100, 96}};
        break;
      default:
        boxes = {{8, 8, 56, 48}, {72, 64, 48, 56}};
    }
    for (const auto& b : boxes)
      rec.instances.push_back(data::TextInstance::from_rect(b, data::Label::authentic));
    m.records.push_back(std::move(rec));
  }
  data::save_manifest(m, dir / "manifest.jsonl");
  return m;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

}  // namespace fx
