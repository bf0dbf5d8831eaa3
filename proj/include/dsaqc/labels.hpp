#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dsaqc {

struct LabelDefinition {
  std::string name;
  std::vector<std::string> classes;

  int class_count() const { return static_cast<int>(classes.size()); }
  /// Class index for an exact class name, if any.
  std::optional<int> index_of(std::string_view class_name) const;
  /// Lower-case identifier safe for file names ("Motion Artefact" -> "motion_artefact").
  std::string slug() const;
};

using Taxonomy = std::vector<LabelDefinition>;

namespace label {
inline constexpr std::string_view kNeuroImaging = "Neuro Imaging";
inline constexpr std::string_view kSkullVisibility = "Skull Visibility";
inline constexpr std::string_view kProjection = "Projection";
inline constexpr std::string_view kContrastFluid = "Contrast Fluid";
inline constexpr std::string_view kDsa = "DSA";
inline constexpr std::string_view kMotionArtefact = "Motion Artefact";
inline constexpr std::string_view kHemisphere = "Hemisphere";
inline constexpr std::string_view kIcaTopVisible = "ICA Top Visible";
inline constexpr std::string_view kMcaVisible = "MCA Visible";
}  // namespace label

/// The nine labels and their ordered classes.
const Taxonomy& builtin_taxonomy();

const LabelDefinition& find_label(const Taxonomy& taxonomy, std::string_view name);

/// Stable 64-bit FNV-1a digest over label and class names, stored in checkpoints.
std::uint64_t taxonomy_hash(const Taxonomy& taxonomy);

struct AnnotationRecord {
  std::string image_id;
  std::string patient_id;
  std::string rater_id;
  std::map<std::string, int> values;  // label name -> class index; absent = not annotated
};

/// Header `image_id,patient_id,rater_id,<label columns>`; cells hold a class
/// name or a class index, empty = not annotated.
std::vector<AnnotationRecord> parse_annotations(const std::filesystem::path& path, const Taxonomy& taxonomy);
std::vector<AnnotationRecord> parse_annotations_text(std::string_view text, const Taxonomy& taxonomy,
                                                     const std::string& origin = "<memory>");
/// Writes class names, one column per taxonomy label.
void write_annotations(const std::filesystem::path& path, const std::vector<AnnotationRecord>& records,
                       const Taxonomy& taxonomy);

enum class Split { train, validation, test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct SplitAssignment {
  std::map<std::string, Split> by_image;
  std::uint64_t seed = 0;
  /// Summed total-variation distance of the chosen partition.
  double imbalance = 0.0;

  std::vector<std::string> images_in(Split s) const;
};

struct SplitOptions {
  SplitFractions fractions;
  std::uint64_t seed = 0;
  int candidates = 200;
  double fraction_tolerance = 0.05;
};

/// Patient-exclusive split: draws seeded random patient partitions that meet the
/// target fractions (by image count, within tolerance) and keeps the one whose
/// per-label class distributions are closest to the global ones.
SplitAssignment stratified_patient_split(const std::vector<AnnotationRecord>& records,
                                         const Taxonomy& taxonomy, const SplitOptions& options);

/// Sum over labels and splits of 0.5 * sum_k |p_split(k) - p_global(k)|.
double split_imbalance(const std::vector<AnnotationRecord>& records, const Taxonomy& taxonomy,
                       const std::map<std::string, Split>& assignment);

void write_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment read_split(const std::filesystem::path& path);

}  // namespace dsaqc
