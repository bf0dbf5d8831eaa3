#include "dsaqc/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "dsaqc/csv.hpp"
#include "dsaqc/dicom.hpp"
#include "dsaqc/errors.hpp"
#include "dsaqc/png_io.hpp"

namespace fs = std::filesystem;

namespace dsaqc::ingest {

std::pair<std::string, std::string> ids_from_name(const fs::path& path) {
  fs::path p = path;
  if (!p.has_filename()) p = p.parent_path();
  std::string stem = fs::is_directory(p) ? p.filename().string() : p.stem().string();
  const auto sep = stem.find("__");
  if (sep == std::string::npos || sep == 0) return {stem, stem};
  return {stem, stem.substr(0, sep)};
}

namespace {

struct FrameSource {
  std::vector<double> values;
  int frames = 0;
  int rows = 0;
  int cols = 0;
};

FrameSource frames_from_dicom(const dicom::Dataset& ds) {
  FrameSource f;
  f.frames = ds.frames;
  f.rows = ds.rows;
  f.cols = ds.columns;
  f.values.resize(ds.stored.size());
  for (std::size_t i = 0; i < ds.stored.size(); ++i) {
    f.values[i] = ds.stored[i] * ds.rescale_slope + ds.rescale_intercept;
  }
  return f;
}

FrameSource frames_from_png(const fs::path& path) {
  const png::Raster r = png::read(path);
  if (r.channels != 1) throw MalformedInputError(path.string() + ": expected a single-channel image");
  FrameSource f;
  f.frames = 1;
  f.rows = r.height;
  f.cols = r.width;
  f.values.assign(r.samples.begin(), r.samples.end());
  return f;
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

void append(FrameStack& stack, const FrameSource& src, const std::string& origin) {
  if (stack.frame_count == 0) {
    stack.height = src.rows;
    stack.width = src.cols;
  } else if (src.rows != stack.height || src.cols != stack.width) {
    throw MalformedInputError(origin + ": frame shape " + std::to_string(src.rows) + "x" +
                              std::to_string(src.cols) + " differs from " + std::to_string(stack.height) +
                              "x" + std::to_string(stack.width));
  }
  stack.data.insert(stack.data.end(), src.values.begin(), src.values.end());
  stack.frame_count += src.frames;
}

}  // namespace

FrameStack load_sequence(const fs::path& path) {
  if (!fs::exists(path)) throw NotFoundError("no such sequence", path.string());
  FrameStack stack;
  stack.source_path = path.string();
  auto [seq_id, patient_id] = ids_from_name(path);
  std::string tag_patient;

  if (fs::is_directory(path)) {
    std::vector<fs::path> dicoms, pngs;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      if (is_png(entry.path())) {
        pngs.push_back(entry.path());
      } else if (dicom::looks_like_dicom(entry.path())) {
        dicoms.push_back(entry.path());
      }
    }
    if (!dicoms.empty()) {
      std::vector<std::pair<dicom::Dataset, fs::path>> sets;
      for (const auto& p : dicoms) sets.emplace_back(dicom::read(p), p);
      std::stable_sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) {
        const int ia = a.first.instance_number.value_or(std::numeric_limits<int>::max());
        const int ib = b.first.instance_number.value_or(std::numeric_limits<int>::max());
        if (ia != ib) return ia < ib;
        return a.second.filename() < b.second.filename();
      });
      for (const auto& [ds, p] : sets) {
        append(stack, frames_from_dicom(ds), p.string());
        if (tag_patient.empty()) tag_patient = ds.patient_id;
      }
    } else {
      std::sort(pngs.begin(), pngs.end());
      for (const auto& p : pngs) append(stack, frames_from_png(p), p.string());
    }
  } else if (is_png(path)) {
    append(stack, frames_from_png(path), path.string());
  } else {
    const dicom::Dataset ds = dicom::read(path);
    append(stack, frames_from_dicom(ds), path.string());
    tag_patient = ds.patient_id;
  }

  if (stack.frame_count == 0) throw MalformedInputError(path.string() + ": sequence holds no frames");
  stack.sequence_id = seq_id;
  stack.patient_id = tag_patient.empty() ? patient_id : tag_patient;
  stack.validate();
  return stack;
}

MinIPImage compute_minip(const FrameStack& stack) {
  stack.validate();
  MinIPImage out;
  out.image_id = stack.sequence_id;
  out.patient_id = stack.patient_id;
  out.image = Image2D(stack.height, stack.width, std::numeric_limits<double>::infinity());
  auto& px = out.image.pixels;
  for (int t = 0; t < stack.frame_count; ++t) {
    const auto f = stack.frame(t);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::min(px[i], f[i]);
  }
  return out;
}

MinIPImage normalize(const MinIPImage& image) {
  const auto& px = image.image.pixels;
  if (px.empty()) throw MalformedInputError("image '" + image.image_id + "' is empty");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : px) {
    if (!std::isfinite(v)) throw MalformedInputError("image '" + image.image_id + "' holds a non-finite pixel");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  MinIPImage out = image;
  if (hi == lo) {
    std::fill(out.image.pixels.begin(), out.image.pixels.end(), 0.0);
    return out;
  }
  const double range = hi - lo;
  for (double& v : out.image.pixels) v = (v - lo) / range;
  return out;
}

void write_manifest(const Manifest& manifest, const fs::path& manifest_path) {
  csv::Table t;
  t.header = {"image_id", "patient_id", "path"};
  for (const auto& r : manifest.rows) t.rows.push_back({r.image_id, r.patient_id, r.path});
  csv::write(manifest_path, t);
}

Manifest write_corpus(const std::vector<MinIPImage>& images, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory", dir.string());
  Manifest manifest;
  for (const auto& img : images) {
    if (img.image_id.empty() || img.image_id.find_first_of("/\\") != std::string::npos) {
      throw ValidationError("image id '" + img.image_id + "' is not usable as a file name");
    }
    std::vector<std::uint16_t> q(img.image.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double v = img.image.pixels[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("image '" + img.image_id + "' is not normalized to [0,1]");
      }
      q[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    const std::string rel = img.image_id + ".png";
    png::write_gray16(dir / rel, img.height(), img.width(), q);
    manifest.rows.push_back({img.image_id, img.patient_id, rel});
  }
  write_manifest(manifest, dir / kManifestName);
  return manifest;
}

Manifest read_manifest(const fs::path& manifest_path) {
  const csv::Table t = csv::read(manifest_path);
  const int ci = t.column("image_id"), cp = t.column("patient_id"), cf = t.column("path");
  if (ci < 0 || cp < 0 || cf < 0) {
    throw SchemaError(manifest_path.string() + ": header must be image_id,patient_id,path");
  }
  Manifest m;
  for (const auto& row : t.rows) m.rows.push_back({row[ci], row[cp], row[cf]});
  return m;
}

std::vector<MinIPImage> read_corpus(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::vector<MinIPImage> out;
  out.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    const png::Raster r = png::read(base / row.path);
    if (r.channels != 1) throw MalformedInputError((base / row.path).string() + ": expected grayscale");
    const double scale = r.bit_depth == 16 ? 65535.0 : 255.0;
    MinIPImage img;
    img.image_id = row.image_id;
    img.patient_id = row.patient_id;
    img.image = Image2D(r.height, r.width);
    for (std::size_t i = 0; i < r.samples.size(); ++i) img.image.pixels[i] = r.samples[i] / scale;
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace dsaqc::ingest
