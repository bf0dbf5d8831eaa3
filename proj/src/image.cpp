#include "dsaqc/image.hpp"

#include <algorithm>
#include <cmath>

#include "dsaqc/errors.hpp"

namespace dsaqc {

void FrameStack::validate() const {
  if (frame_count < 1) throw MalformedInputError("frame stack '" + sequence_id + "' has no frames");
  if (height < 1 || width < 1) throw MalformedInputError("frame stack '" + sequence_id + "' has empty frames");
  if (data.size() != static_cast<std::size_t>(frame_count) * height * width) {
    throw MalformedInputError("frame stack '" + sequence_id + "' has inconsistent buffer size");
  }
  for (double v : data) {
    if (!std::isfinite(v) || v < 0.0) {
      throw MalformedInputError("frame stack '" + sequence_id + "' holds a negative or non-finite intensity");
    }
  }
}

namespace {

struct Tap {
  int lo, hi;
  double frac;
};

std::vector<Tap> taps(int src, int dst) {
  std::vector<Tap> out(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double x = (i + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(x));
    const int hi = std::min(lo + 1, src - 1);
    out[i] = {lo, hi, x - lo};
  }
  return out;
}

}  // namespace

Image2D resize_bilinear(const Image2D& src, int height, int width) {
  if (height == src.height && width == src.width) return src;
  const auto ty = taps(src.height, height);
  const auto tx = taps(src.width, width);
  Image2D out(height, width);
  for (int r = 0; r < height; ++r) {
    const Tap& a = ty[r];
    for (int c = 0; c < width; ++c) {
      const Tap& b = tx[c];
      const double top = src.at(a.lo, b.lo) * (1 - b.frac) + src.at(a.lo, b.hi) * b.frac;
      const double bot = src.at(a.hi, b.lo) * (1 - b.frac) + src.at(a.hi, b.hi) * b.frac;
      out.at(r, c) = top * (1 - a.frac) + bot * a.frac;
    }
  }
  return out;
}

}  // namespace dsaqc
