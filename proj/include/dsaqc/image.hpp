#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dsaqc {

/// Row-major single-channel image of doubles.
struct Image2D {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image2D() = default;
  Image2D(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return pixels.size(); }
  bool operator==(const Image2D&) const = default;
};

/// T frames of H x W intensities in acquisition order.
struct FrameStack {
  int frame_count = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;
  std::string sequence_id;
  std::string patient_id;
  std::string source_path;

  std::span<const double> frame(int t) const {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    return {data.data() + n * t, n};
  }
  std::span<double> frame(int t) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    return {data.data() + n * t, n};
  }

  /// Throws MalformedInputError when the stack violates its invariants.
  void validate() const;
};

struct MinIPImage {
  std::string image_id;
  std::string patient_id;
  Image2D image;

  int height() const { return image.height; }
  int width() const { return image.width; }
};

/// Bilinear resampling with half-pixel centres (align_corners = false).
/// Identity when the target size equals the source size.
Image2D resize_bilinear(const Image2D& src, int height, int width);

}  // namespace dsaqc
