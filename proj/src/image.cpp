#include "ostf/image.hpp"

#include <limits>

namespace ostf::img {

Image constant_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image im(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      im.at(x, y, 0) = r;
      im.at(x, y, 1) = g;
      im.at(x, y, 2) = b;
    }
  return im;
}

Image crop(const Image& im, const IRect& r) {
  if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 || r.x1() > im.width || r.y1() > im.height)
    throw ParamError("crop rectangle out of bounds");
  Image out(r.w, r.h);
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = im.at(r.x + x, r.y + y, c);
  return out;
}

void paste(Image& im, const Image& patch, int x, int y) {
  if (x < 0 || y < 0 || x + patch.width > im.width || y + patch.height > im.height)
    throw ParamError("paste rectangle out of bounds");
  for (int py = 0; py < patch.height; ++py)
    for (int px = 0; px < patch.width; ++px)
      for (int c = 0; c < 3; ++c) im.at(x + px, y + py, c) = patch.at(px, py, c);
}

Image resize_bilinear(const Image& im, int out_w, int out_h) {
  Planes<double> p = to_planes<double>(im);
  Planes<double> q;
  for (int c = 0; c < 3; ++c) q[c] = resize_bilinear(p[c], out_w, out_h);
  return from_planes(q);
}

double mad(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ParamError("mad: shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    acc += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
  return acc / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ParamError("psnr: shape mismatch");
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace ostf::img
