#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dsaqc::dicom {

/// Uncompressed grayscale pixel payload plus the handful of tags the pipeline
/// needs. Only little-endian implicit/explicit VR transfer syntaxes are read.
struct Dataset {
  std::string patient_id;
  std::string series_uid;
  std::string sop_instance_uid;
  std::optional<int> instance_number;
  int rows = 0;
  int columns = 0;
  int frames = 1;
  int bits_allocated = 16;
  int pixel_representation = 0;
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  /// frames * rows * columns stored values, before rescale.
  std::vector<std::int32_t> stored;
};

/// True when the file carries the "DICM" magic after the 128-byte preamble.
bool looks_like_dicom(const std::filesystem::path& path);

Dataset read(const std::filesystem::path& path);

/// Writes an explicit-VR little-endian multi-frame X-ray angiography object
/// with 16-bit unsigned pixels.
void write_multiframe(const std::filesystem::path& path, const std::string& patient_id,
                      const std::string& series_uid, int rows, int columns,
                      const std::vector<std::uint16_t>& frames_data);

}  // namespace dsaqc::dicom
