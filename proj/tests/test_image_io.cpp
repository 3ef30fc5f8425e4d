#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "ostf/image_io.hpp"
#include "support/fixtures.hpp"
#include "support/reference.hpp"

using namespace ostf;

TEST_CASE("png round-trips losslessly") {
  fx::TempDir dir;
  const img::Image im = fx::noise_image(33, 17, 4);
  const auto path = dir.path / "a.png";
  img::save_png(im, path);
  const img::Image back = img::load_png(path);
  CHECK(back.width == im.width);
  CHECK(back.height == im.height);
  CHECK(back.data == im.data);
}

TEST_CASE("jpeg codec keeps size and flat color") {
  const img::Image flat = img::constant_image(31, 22, 200, 80, 30);
  const auto bytes = img::encode_jpeg(flat, 90);
  CHECK(bytes.size() > 2);
  // SOI marker.
  CHECK(bytes[0] == 0xFF);
  CHECK(bytes[1] == 0xD8);
  const img::Image back = img::decode_jpeg(bytes);
  CHECK(back.width == 31);
  CHECK(back.height == 22);
  CHECK(img::mad(flat, back) <= 1.0);

  CHECK_THROWS_AS(img::encode_jpeg(flat, 0), ParamError);
  CHECK_THROWS_AS(img::encode_jpeg(flat, 101), ParamError);
}

TEST_CASE("load_image sniffs the container format") {
  fx::TempDir dir;
  const img::Image im = fx::textured_image(24, 18, 9);

  const auto png_path = dir.path / "t.png";
  img::save_png(im, png_path);
  CHECK(img::load_image(png_path).data == im.data);

  const auto jpg_path = dir.path / "t.jpg";
  {
    const auto bytes = img::encode_jpeg(im, 95);
    std::ofstream out(jpg_path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  }
  const img::Image back = img::load_image(jpg_path);
  CHECK(back.width == im.width);
  CHECK(back.height == im.height);
  // Lossy, but close at quality 95.
  CHECK(img::mad(im, back) < 8.0);
}

TEST_CASE("save_image picks the codec from the extension") {
  fx::TempDir dir;
  const img::Image im = fx::textured_image(20, 20, 2);
  img::save_image(im, dir.path / "x.png");
  CHECK(img::load_image(dir.path / "x.png").data == im.data);
  img::save_image(im, dir.path / "x.jpg");
  const img::Image back = img::load_image(dir.path / "x.jpg");
  CHECK(back.width == 20);
  CHECK(back.height == 20);
}

TEST_CASE("read_image_size parses headers without decoding") {
  fx::TempDir dir;
  const img::Image im = fx::noise_image(47, 29, 1);
  img::save_png(im, dir.path / "s.png");
  CHECK(img::read_image_size(dir.path / "s.png") == std::pair<int, int>{47, 29});

  const auto bytes = img::encode_jpeg(im, 80);
  std::ofstream(dir.path / "s.jpg", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  CHECK(img::read_image_size(dir.path / "s.jpg") == std::pair<int, int>{47, 29});
}

TEST_CASE("missing or corrupt files raise io errors") {
  fx::TempDir dir;
  CHECK_THROWS_AS(img::load_png(dir.path / "missing.png"), Error);
  CHECK_THROWS_AS(img::load_image(dir.path / "missing.png"), Error);
  CHECK_THROWS_AS(img::read_image_size(dir.path / "missing.png"), Error);

  std::ofstream(dir.path / "junk.png") << "not an image at all";
  CHECK_THROWS_AS(img::load_image(dir.path / "junk.png"), Error);
}
