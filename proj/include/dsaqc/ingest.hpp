#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dsaqc/image.hpp"

namespace dsaqc::ingest {

struct ManifestRow {
  std::string image_id;
  std::string patient_id;
  std::string path;  // relative to the manifest's directory
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

inline constexpr const char* kManifestName = "manifest.csv";

/// Reads one acquisition. Accepted inputs:
///   - a DICOM file (single- or multi-frame, uncompressed little endian)
///   - a directory of DICOM files, ordered by InstanceNumber then file name
///   - a directory of grayscale PNG frames, ordered by file name
///   - a single grayscale PNG (one frame)
/// The image id is the file or directory stem. PatientID comes from the DICOM
/// tag when present, otherwise from a `<patient>__<sequence>` stem (or the
/// whole stem).
FrameStack load_sequence(const std::filesystem::path& path);

/// Per-pixel minimum over frames, in the stack's native scale.
MinIPImage compute_minip(const FrameStack& stack);

/// Min-max rescale to [0,1]; constant images map to all zeros.
MinIPImage normalize(const MinIPImage& image);

/// Saves 16-bit PNGs (round(x * 65535)) plus `manifest.csv` under `dir`.
Manifest write_corpus(const std::vector<MinIPImage>& images, const std::filesystem::path& dir);

Manifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& manifest_path);

/// Loads every image listed in a manifest back into [0,1].
std::vector<MinIPImage> read_corpus(const std::filesystem::path& manifest_path);

/// Image id and patient id derived from a sequence's file or directory name.
std::pair<std::string, std::string> ids_from_name(const std::filesystem::path& path);

}  // namespace dsaqc::ingest
