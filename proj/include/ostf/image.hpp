#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ostf/errors.hpp"

namespace ostf::img {

template <class Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneD = Plane<double>;

template <class Scalar>
using Planes = std::array<Plane<Scalar>, 3>;

// 8-bit interleaved RGB raster. Filtering happens on float planes and is
// quantized back exactly once per operation.
struct Image {
  int width = 0;
  int height = 0;
  static constexpr int channels = 3;
  std::vector<std::uint8_t> data;  // row-major, RGB interleaved

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * channels, 0) {
    if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
  }

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

// Integer pixel rectangle, half-open in neither sense: x..x+w-1 inclusive.
struct IRect {
  int x = 0, y = 0, w = 0, h = 0;
  int x1() const { return x + w; }
  int y1() const { return y + h; }
  bool contains(int px, int py) const { return px >= x && px < x1() && py >= y && py < y1(); }
};

inline std::uint8_t quantize(double v) {
  const double r = std::floor(v + 0.5);  // round half up, stable across platforms
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

// Symmetric (edge-inclusive) reflection of an index into [0, n).
inline int fold(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return (i < n) ? i : period - 1 - i;
}

template <class Scalar>
Planes<Scalar> to_planes(const Image& im) {
  Planes<Scalar> p;
  for (int c = 0; c < 3; ++c) p[c].resize(im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) p[c](y, x) = static_cast<Scalar>(im.at(x, y, c));
  return p;
}

template <class Scalar>
Image from_planes(const Planes<Scalar>& p) {
  Image im(static_cast<int>(p[0].cols()), static_cast<int>(p[0].rows()));
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) im.at(x, y, c) = quantize(static_cast<double>(p[c](y, x)));
  return im;
}

Image constant_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);
Image crop(const Image& im, const IRect& r);
void paste(Image& im, const Image& patch, int x, int y);

// Bilinear resampling with half-pixel centers; sample coordinates are clamped
// to the source raster.
template <class Scalar>
Plane<Scalar> resize_bilinear(const Plane<Scalar>& src, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ParamError("resize target must be >= 1x1");
  const int in_w = static_cast<int>(src.cols());
  const int in_h = static_cast<int>(src.rows());
  Plane<Scalar> dst(out_h, out_w);
  const double sx = static_cast<double>(in_w) / out_w;
  const double sy = static_cast<double>(in_h) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    if (fy > in_h - 1) fy = in_h - 1;
    const int y0 = static_cast<int>(fy);
    const int y1 = (y0 + 1 < in_h) ? y0 + 1 : y0;
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      if (fx > in_w - 1) fx = in_w - 1;
      const int x0 = static_cast<int>(fx);
      const int x1 = (x0 + 1 < in_w) ? x0 + 1 : x0;
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * src(y0, x0) + wx * src(y0, x1)) +
                       wy * ((1 - wx) * src(y1, x0) + wx * src(y1, x1));
      dst(oy, ox) = static_cast<Scalar>(v);
    }
  }
  return dst;
}

Image resize_bilinear(const Image& im, int out_w, int out_h);

// Mean absolute difference on the 0..255 scale.
double mad(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);

}  // namespace ostf::img
