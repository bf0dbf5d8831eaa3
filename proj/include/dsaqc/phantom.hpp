#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsaqc/image.hpp"
#include "dsaqc/labels.hpp"
#include "dsaqc/suitability.hpp"

namespace dsaqc::phantom {

/// `label` must take one of `allowed` (class indices).
struct Condition {
  std::string label;
  std::vector<int> allowed;
};

/// Downstream success when every condition holds, then flipped at random with
/// a probability that depends on the rule's outcome.
struct SegmentabilityRule {
  std::vector<Condition> require;
  double flip_if_success = 0.1;
  double flip_if_failure = 0.1;

  /// Contrast Present, DSA, Motion Artefact not Severe; 10% flips both ways.
  static SegmentabilityRule defaults();
  bool holds(const std::map<std::string, int>& truth) const;
};

struct PhantomSpec {
  int n_patients = 100;
  int images_per_patient_min = 6;
  int images_per_patient_max = 10;
  int image_side = 128;
  int frames = 4;
  std::uint64_t seed = 0;
  /// Class probabilities per label. Labels that depend on others (see
  /// forced_class) use these as conditional priors over eligible images.
  std::map<std::string, std::vector<double>> priors;
  /// Gaussian noise sigma as a fraction of the 12-bit range.
  double noise_level = 0.01;
  SegmentabilityRule segmentability = SegmentabilityRule::defaults();
  /// Simulated multi-rater annotations on a random subset of images.
  int rating_subset = 126;
  /// Per-rater probability of replacing the true class with a random one.
  std::map<std::string, double> rater_error = {
      {"expert", 0.02}, {"r1", 0.05}, {"r2", 0.08}, {"r3", 0.10}, {"r4", 0.12}};

  /// Priors proportional to the class counts of the clinical dataset.
  static std::map<std::string, std::vector<double>> default_priors();
  PhantomSpec() : priors(default_priors()) {}

  /// Throws ValidationError on malformed or logically infeasible settings.
  void validate() const;
};

/// Class imposed on `label` by the other labels of an image, if any:
/// Not Neuro forces Neck, AP view, Indeterm. and no visible landmark vessels;
/// Contrast Absent forces Indeterm. and no visible landmark vessels.
std::optional<int> forced_class(std::string_view label, const std::map<std::string, int>& truth);

struct PhantomImage {
  std::string image_id;
  std::string patient_id;
  std::map<std::string, int> truth;
  int frames = 0;
  int side = 0;
  /// frames * side * side 12-bit values.
  std::vector<std::uint16_t> pixels;
  /// 1 where the vessel tree is drawn at its unshifted position.
  Image2D vessel_mask;
  /// Displacement of the late frames, in pixels (0 without motion).
  double motion_offset = 0.0;

  FrameStack stack() const;
};

struct Corpus {
  std::vector<PhantomImage> images;
  /// Ground truth, rater_id "oracle".
  std::vector<AnnotationRecord> annotations;
  std::vector<DownstreamOutcome> outcomes;
  /// Noisy copies of the ground truth by several raters on a shared subset.
  std::vector<AnnotationRecord> ratings;
};

Corpus generate_corpus(const PhantomSpec& spec);

/// Writes sequences/<image_id>.dcm, annotations.csv, outcomes.csv, ratings.csv.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace dsaqc::phantom
