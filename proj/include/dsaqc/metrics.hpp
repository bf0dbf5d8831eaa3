#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsaqc/labels.hpp"

namespace dsaqc::metrics {

/// Mann-Whitney U with ties counted one half, doubled so it stays integral:
/// 2 * #{s_pos > s_neg} + #{s_pos == s_neg}.
long long doubled_mann_whitney(std::span<const double> scores, std::span<const int> truths);

/// Area under the ROC curve (trapezoidal, ties = 1/2). Truths are 0/1.
/// Throws DegenerateDataError when only one class is present.
double roc_auc_binary(std::span<const double> scores, std::span<const int> truths);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};
/// ROC curve vertices from (0,0) to (1,1), one per distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> truths);

struct MacroAuc {
  double macro = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from truths
  bool missing_class = false;
};

/// One-vs-rest AUC per class; macro = unweighted mean of the defined ones.
MacroAuc macro_roc_auc(const std::vector<std::vector<double>>& probs, std::span<const int> truths, int class_count);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no predictions of this class
  bool recall_undefined = false;     // no true members of this class
};

struct PrfReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;
  /// confusion[truth][predicted]
  std::vector<std::vector<long>> confusion;
  bool zero_division = false;
};

/// Zero-denominator classes contribute 0 to the macro averages and raise the flag.
PrfReport prf_accuracy(std::span<const int> predicted, std::span<const int> truth, int class_count);

struct BinaryConfusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;

  long total() const { return tp + fp + fn + tn; }
  std::optional<double> sensitivity() const;
  std::optional<double> specificity() const;
};

struct MetricsReport {
  std::string label_name;
  std::string model;
  int class_count = 0;
  std::size_t samples = 0;
  /// Binary: AUC of the positive-class score; multiclass: macro one-vs-rest AUC.
  double roc_auc = 0.0;
  std::vector<std::optional<double>> per_class_auc;
  double accuracy = 0.0;
  /// Binary: positive class (index 1); multiclass: macro averages.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::vector<long>> confusion;
  std::vector<std::string> warnings;
};

MetricsReport evaluate_label(const LabelDefinition& label, const std::vector<std::vector<double>>& probs,
                             std::span<const int> truths, const std::string& model_name = {});

std::string to_json(const MetricsReport& report);
/// Label | Model | ROC-AUC | Accuracy | Precision | Recall | F1 as aligned text.
std::string render_table(const std::vector<MetricsReport>& reports);

}  // namespace dsaqc::metrics
