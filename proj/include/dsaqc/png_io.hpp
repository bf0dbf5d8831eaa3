#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dsaqc::png {

/// Decoded raster. `samples` holds channels interleaved, row-major; 8-bit files
/// keep their 0..255 range.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

Raster read(const std::filesystem::path& path);

void write_gray16(const std::filesystem::path& path, int height, int width,
                  const std::vector<std::uint16_t>& values);
void write_rgb8(const std::filesystem::path& path, int height, int width,
                const std::vector<std::uint8_t>& rgb);

}  // namespace dsaqc::png
