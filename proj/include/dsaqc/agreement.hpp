#pragma once

#include <span>
#include <string>
#include <vector>

#include "dsaqc/labels.hpp"

namespace dsaqc::agreement {

struct Kappa {
  double value = 0.0;
  double observed = 0.0;  // p_o (Cohen) or mean P_i (Fleiss)
  double expected = 0.0;  // chance agreement p_e / P_e
  /// Chance agreement is 1 (a single category used throughout); value is then
  /// 1 for perfect observed agreement and 0 otherwise.
  bool degenerate = false;
};

Kappa cohen_kappa(std::span<const int> a, std::span<const int> b, int class_count);

/// counts[i][k] = raters assigning item i to category k; every row sums to n_raters.
Kappa fleiss_kappa(const std::vector<std::vector<int>>& counts, int n_raters);

/// Ratings of one label by several raters over a shared item list.
struct RatingTable {
  std::string label_name;
  int class_count = 0;
  std::vector<std::string> items;
  std::vector<std::string> raters;
  std::vector<std::vector<int>> ratings;  // [rater][item]

  std::vector<std::vector<int>> category_counts() const;
};

/// One table per label, keeping the items every rater annotated for that label.
std::vector<RatingTable> build_rating_tables(const std::vector<AnnotationRecord>& records, const Taxonomy& taxonomy);

struct RaterAgreement {
  std::string rater_id;
  Kappa kappa;
  bool reliable = false;
};

struct LabelAgreement {
  std::string label_name;
  std::size_t items = 0;
  std::vector<RaterAgreement> versus_reference;
  Kappa fleiss;
  bool fleiss_reliable = false;
};

struct AgreementReport {
  std::string reference_rater;
  double threshold = 0.81;
  std::vector<LabelAgreement> labels;
};

/// Cohen's kappa of every rater against the reference, Fleiss' kappa across
/// all raters, each flagged reliable when kappa >= threshold.
AgreementReport agreement_report(std::span<const RatingTable> tables, const std::string& reference_rater,
                                 double threshold = 0.81);

std::string to_json(const AgreementReport& report);
std::string render_text(const AgreementReport& report);

/// Values reported for the original clinical rating study (126 images, five
/// raters). The ratings themselves are not public, so these serve as
/// documentation only.
namespace reported {
inline constexpr int kSubsetImages = 126;
inline constexpr double kCohenMotionArtefact = 0.779;
inline constexpr double kCohenMcaVisible = 0.786;
inline constexpr double kFleissSkullVisibility = 0.713;
inline constexpr double kFleissMotionArtefact = 0.594;
inline constexpr double kFleissMcaVisible = 0.637;
}  // namespace reported

}  // namespace dsaqc::agreement
