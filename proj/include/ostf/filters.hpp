#pragma once

#include <cmath>
#include <vector>

#include "ostf/image.hpp"

namespace ostf::img {

// Parameter block for the four convolution-style texture kernels. Only the
// fields of the active kind are meaningful.
struct KernelSpec {
  enum class Kind { gaussian, downsample, motion, sharpen };
  Kind kind = Kind::gaussian;
  double sigma = 0.0;     // gaussian
  double factor = 0.0;    // downsample, > 1
  int length = 0;         // motion, >= 1
  double angle = 0.0;     // motion, degrees
  double strength = 0.0;  // sharpen, [0,1]
};

// 1-D Gaussian taps, radius ceil(3*sigma), normalized to sum 1.
std::vector<double> gaussian_taps(double sigma);

// Rasterized line kernel: list of (dx, dy, weight) with weights summing to 1.
struct MotionTap {
  int dx, dy;
  double w;
};
std::vector<MotionTap> motion_taps(int length, double angle_deg);

Image gaussian_blur(const Image& im, double sigma);
Image downsample_blur(const Image& im, double factor);
Image motion_blur(const Image& im, int length, double angle_deg);
Image sharpen(const Image& im, double strength);
Image deblock(const Image& im, double strength);
Image apply_kernel(const Image& im, const KernelSpec& spec);

// Encode to baseline JPEG at the given quality and decode back.
Image jpeg_roundtrip(const Image& im, int quality);

// Plane-level separable Gaussian with symmetric-reflected borders.
template <class Scalar>
Plane<Scalar> gaussian_blur(const Plane<Scalar>& src, double sigma) {
  const std::vector<double> taps = gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  Plane<Scalar> tmp(h, w), dst(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += taps[t + r] * src(y, fold(x + t, w));
      tmp(y, x) = static_cast<Scalar>(acc);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += taps[t + r] * tmp(fold(y + t, h), x);
      dst(y, x) = static_cast<Scalar>(acc);
    }
  return dst;
}

template <class Scalar>
Plane<Scalar> convolve_taps(const Plane<Scalar>& src, const std::vector<MotionTap>& taps) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  Plane<Scalar> dst(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (const MotionTap& t : taps) acc += t.w * src(fold(y + t.dy, h), fold(x + t.dx, w));
      dst(y, x) = static_cast<Scalar>(acc);
    }
  return dst;
}

// Signed Laplacian sharpen response: center 5, cross -1, blended by strength.
template <class Scalar>
Plane<Scalar> sharpen(const Plane<Scalar>& src, double strength) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  Plane<Scalar> dst(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double filtered = 5.0 * src(y, x) - src(fold(y - 1, h), x) - src(fold(y + 1, h), x) -
                              src(y, fold(x - 1, w)) - src(y, fold(x + 1, w));
      dst(y, x) = static_cast<Scalar>((1.0 - strength) * src(y, x) + strength * filtered);
    }
  return dst;
}

}  // namespace ostf::img
