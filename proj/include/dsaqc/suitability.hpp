#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsaqc/classifier.hpp"
#include "dsaqc/metrics.hpp"

namespace dsaqc {

/// Exclusion rules; each fires on argmax classes of one label.
///   neuro_imaging     Neuro Imaging = Not Neuro
///   skull_visibility  Skull Visibility = Neck
///   contrast_fluid    Contrast Fluid = Absent
///   dsa               DSA = Not DSA
///   motion_artefact   Motion Artefact = Mild or Severe
struct RuleSet {
  bool neuro_imaging = true;
  bool skull_visibility = true;
  bool contrast_fluid = true;
  bool dsa = true;
  bool motion_artefact = true;
};

struct SuitabilityDecision {
  std::string image_id;
  bool suitable = true;
  std::vector<std::string> triggered_rules;
};

/// Throws ValidationError naming the first enabled rule label that is missing.
SuitabilityDecision assess_classes(const std::string& image_id, const std::map<std::string, int>& classes,
                                   const RuleSet& rules = {});
SuitabilityDecision assess(const PredictionRecord& record, const RuleSet& rules = {});

struct ZTest {
  double z = 0.0;
  double p_two_sided = 1.0;
  double pooled = 0.0;
};

/// Pooled two-proportion test of k2/n2 against k1/n1. Throws DegenerateDataError
/// when the pooled proportion is 0 or 1.
ZTest two_proportion_z_test(long k1, long n1, long k2, long n2);

struct DownstreamOutcome {
  std::string image_id;
  bool success = false;
};

struct DownstreamReport {
  /// TP included+success, FP included+failure, FN excluded+success, TN excluded+failure.
  metrics::BinaryConfusion confusion;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double unfiltered_rate = 0.0;
  std::optional<double> filtered_rate;
  /// Filtered (TP/(TP+FP)) against unfiltered ((TP+FN)/N). The filtered images
  /// are a subset of the full set, so the samples overlap.
  std::optional<ZTest> z_test;
  std::vector<std::string> warnings;
};

DownstreamReport downstream_from_counts(const metrics::BinaryConfusion& counts);
/// Throws ValidationError listing ids present on one side only.
DownstreamReport evaluate_filter(const std::vector<SuitabilityDecision>& decisions,
                                 const std::vector<DownstreamOutcome>& outcomes);

/// `image_id,success` with success as 1/0 or true/false.
std::vector<DownstreamOutcome> read_outcomes(const std::filesystem::path& path);
void write_outcomes(const std::filesystem::path& path, const std::vector<DownstreamOutcome>& outcomes);
/// `image_id,suitable,triggered_rules` with rules separated by ';'.
std::vector<SuitabilityDecision> read_decisions(const std::filesystem::path& path);
void write_decisions(const std::filesystem::path& path, const std::vector<SuitabilityDecision>& decisions);

std::string to_json(const DownstreamReport& report);
/// Included/excluded by success/failure with sensitivity, specificity and the test.
std::string render_confusion_table(const DownstreamReport& report);

}  // namespace dsaqc
