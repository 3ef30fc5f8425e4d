#include "ostf/filters.hpp"

#include <algorithm>

#include "ostf/image_io.hpp"

namespace ostf::img {

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParamError("gaussian sigma must be finite and >= 0");
  if (sigma == 0.0) return {1.0};
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * r + 1);
  double sum = 0;
  for (int t = -r; t <= r; ++t) {
    taps[t + r] = std::exp(-0.5 * (t / sigma) * (t / sigma));
    sum += taps[t + r];
  }
  for (double& v : taps) v /= sum;
  return taps;
}

std::vector<MotionTap> motion_taps(int length, double angle_deg) {
  if (length < 1) throw ParamError("motion length must be >= 1");
  if (!std::isfinite(angle_deg)) throw ParamError("motion angle must be finite");
  const double rad = angle_deg * M_PI / 180.0;
  const double cx = std::cos(rad);
  const double cy = std::sin(rad);
  std::vector<MotionTap> taps;
  for (int i = 0; i < length; ++i) {
    const double t = i - (length - 1) / 2.0;
    const int dx = static_cast<int>(std::floor(t * cx + 0.5));
    const int dy = static_cast<int>(std::floor(t * cy + 0.5));
    auto it = std::find_if(taps.begin(), taps.end(),
                           [&](const MotionTap& m) { return m.dx == dx && m.dy == dy; });
    if (it == taps.end()) taps.push_back({dx, dy, 1.0});
    else it->w += 1.0;
  }
  for (MotionTap& m : taps) m.w /= static_cast<double>(length);
  return taps;
}

namespace {

template <class Fn>
Image per_plane(const Image& im, Fn&& fn) {
  Planes<double> p = to_planes<double>(im);
  for (int c = 0; c < 3; ++c) p[c] = fn(p[c]);
  return from_planes(p);
}

}  // namespace

Image gaussian_blur(const Image& im, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParamError("gaussian sigma must be finite and >= 0");
  if (sigma == 0.0) return im;
  return per_plane(im, [&](const PlaneD& p) { return gaussian_blur(p, sigma); });
}

Image downsample_blur(const Image& im, double factor) {
  if (!(factor > 1.0) || !std::isfinite(factor)) throw ParamError("downsample factor must be > 1");
  const int dw = std::max(1, static_cast<int>(std::lround(im.width / factor)));
  const int dh = std::max(1, static_cast<int>(std::lround(im.height / factor)));
  return per_plane(im, [&](const PlaneD& p) {
    return resize_bilinear(resize_bilinear(p, dw, dh), im.width, im.height);
  });
}

Image motion_blur(const Image& im, int length, double angle_deg) {
  const std::vector<MotionTap> taps = motion_taps(length, angle_deg);
  if (taps.size() == 1 && taps[0].dx == 0 && taps[0].dy == 0) return im;
  return per_plane(im, [&](const PlaneD& p) { return convolve_taps(p, taps); });
}

Image sharpen(const Image& im, double strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw ParamError("sharpen strength must be in [0,1]");
  if (strength == 0.0) return im;
  return per_plane(im, [&](const PlaneD& p) { return sharpen(p, strength); });
}

// Classical stand-in for a learned reverse-compression model: pull the two
// pixels flanking each 8x8 block boundary a quarter-step toward each other,
// scaled by strength. Interior pixels are untouched.
Image deblock(const Image& im, double strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw ParamError("deblock strength must be in [0,1]");
  if (strength == 0.0) return im;
  Planes<double> p = to_planes<double>(im);
  for (int c = 0; c < 3; ++c) {
    PlaneD& pl = p[c];
    for (int x = 8; x < im.width; x += 8) {
      for (int y = 0; y < im.height; ++y) {
        const double a = pl(y, x - 1), b = pl(y, x);
        const double step = strength * (b - a) * 0.25;
        pl(y, x - 1) = a + step;
        pl(y, x) = b - step;
      }
    }
    for (int y = 8; y < im.height; y += 8) {
      for (int x = 0; x < im.width; ++x) {
        const double a = pl(y - 1, x), b = pl(y, x);
        const double step = strength * (b - a) * 0.25;
        pl(y - 1, x) = a + step;
        pl(y, x) = b - step;
      }
    }
  }
  return from_planes(p);
}

Image apply_kernel(const Image& im, const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelSpec::Kind::gaussian: return gaussian_blur(im, spec.sigma);
    case KernelSpec::Kind::downsample: return downsample_blur(im, spec.factor);
    case KernelSpec::Kind::motion: return motion_blur(im, spec.length, spec.angle);
    case KernelSpec::Kind::sharpen: return sharpen(im, spec.strength);
  }
  throw ParamError("unknown kernel kind");
}

Image jpeg_roundtrip(const Image& im, int quality) {
  if (quality < 1 || quality > 100) throw ParamError("jpeg quality must be in [1,100]");
  return decode_jpeg(encode_jpeg(im, quality));
}

}  // namespace ostf::img
