#include "dsaqc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dsaqc/errors.hpp"
#include "json.hpp"

namespace dsaqc::metrics {

namespace {

struct Counts {
  long long positives = 0;
  long long negatives = 0;
};

Counts check_binary(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size()) throw ValidationError("scores and truths differ in length");
  Counts c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] != 0 && truths[i] != 1) throw ValidationError("binary truths must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValidationError("scores must be finite");
    (truths[i] ? c.positives : c.negatives)++;
  }
  if (c.positives == 0 || c.negatives == 0) {
    throw DegenerateDataError("ROC-AUC is undefined when only one class is present");
  }
  return c;
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

long long doubled_mann_whitney(std::span<const double> scores, std::span<const int> truths) {
  check_binary(scores, truths);
  // Walk tie groups from the highest score: each negative in a group is beaten
  // by every positive above it and ties with the positives inside it.
  const auto idx = order_descending(scores);
  long long doubled = 0, tp_above = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    long long tp = 0, fp = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (truths[idx[j]] ? tp : fp)++;
      ++j;
    }
    doubled += fp * (2 * tp_above + tp);
    tp_above += tp;
    i = j;
  }
  return doubled;
}

double roc_auc_binary(std::span<const double> scores, std::span<const int> truths) {
  const Counts c = check_binary(scores, truths);
  return static_cast<double>(doubled_mann_whitney(scores, truths)) /
         (2.0 * static_cast<double>(c.positives) * static_cast<double>(c.negatives));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> truths) {
  const Counts c = check_binary(scores, truths);
  const auto idx = order_descending(scores);
  std::vector<RocPoint> pts{{0.0, 0.0}};
  long long tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (truths[idx[j]] ? tp : fp)++;
      ++j;
    }
    pts.push_back({static_cast<double>(fp) / c.negatives, static_cast<double>(tp) / c.positives});
    i = j;
  }
  return pts;
}

MacroAuc macro_roc_auc(const std::vector<std::vector<double>>& probs, std::span<const int> truths, int class_count) {
  if (probs.size() != truths.size()) throw ValidationError("probabilities and truths differ in length");
  if (class_count < 2) throw ValidationError("macro ROC-AUC needs at least two classes");
  MacroAuc out;
  out.per_class.resize(class_count);
  std::vector<double> scores(probs.size());
  std::vector<int> ovr(probs.size());
  double sum = 0.0;
  int defined = 0;
  for (int k = 0; k < class_count; ++k) {
    long members = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (static_cast<int>(probs[i].size()) != class_count) throw ValidationError("probability row has wrong width");
      if (truths[i] < 0 || truths[i] >= class_count) throw ValidationError("truth class out of range");
      scores[i] = probs[i][k];
      ovr[i] = truths[i] == k;
      members += ovr[i];
    }
    if (members == 0 || members == static_cast<long>(probs.size())) {
      out.missing_class = true;
      continue;
    }
    out.per_class[k] = roc_auc_binary(scores, ovr);
    sum += *out.per_class[k];
    ++defined;
  }
  if (defined == 0) throw DegenerateDataError("macro ROC-AUC undefined: no class has both members and non-members");
  out.macro = sum / defined;
  return out;
}

PrfReport prf_accuracy(std::span<const int> predicted, std::span<const int> truth, int class_count) {
  if (predicted.size() != truth.size()) throw ValidationError("predictions and truths differ in length");
  if (truth.empty()) throw ValidationError("metrics need at least one sample");
  PrfReport r;
  r.confusion.assign(class_count, std::vector<long>(class_count, 0));
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= class_count || predicted[i] < 0 || predicted[i] >= class_count) {
      throw ValidationError("class index out of range");
    }
    r.confusion[truth[i]][predicted[i]]++;
    correct += truth[i] == predicted[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  r.per_class.resize(class_count);
  for (int k = 0; k < class_count; ++k) {
    long tp = r.confusion[k][k], pred_k = 0, true_k = 0;
    for (int j = 0; j < class_count; ++j) {
      pred_k += r.confusion[j][k];
      true_k += r.confusion[k][j];
    }
    ClassScores& s = r.per_class[k];
    if (pred_k == 0) {
      s.precision_undefined = true;
      r.zero_division = true;
    } else {
      s.precision = static_cast<double>(tp) / pred_k;
    }
    if (true_k == 0) {
      s.recall_undefined = true;
      r.zero_division = true;
    } else {
      s.recall = static_cast<double>(tp) / true_k;
    }
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    r.macro_precision += s.precision / class_count;
    r.macro_recall += s.recall / class_count;
    r.macro_f1 += s.f1 / class_count;
  }
  return r;
}

std::optional<double> BinaryConfusion::sensitivity() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> BinaryConfusion::specificity() const {
  if (tn + fp == 0) return std::nullopt;
  return static_cast<double>(tn) / static_cast<double>(tn + fp);
}

MetricsReport evaluate_label(const LabelDefinition& label, const std::vector<std::vector<double>>& probs,
                             std::span<const int> truths, const std::string& model_name) {
  const int K = label.class_count();
  MetricsReport r;
  r.label_name = label.name;
  r.model = model_name;
  r.class_count = K;
  r.samples = truths.size();
  std::vector<int> predicted(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    predicted[i] = static_cast<int>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  if (K == 2) {
    std::vector<double> pos(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) pos[i] = probs[i].at(1);
    r.roc_auc = roc_auc_binary(pos, truths);
    const MacroAuc m = macro_roc_auc(probs, truths, K);
    r.per_class_auc = m.per_class;
  } else {
    const MacroAuc m = macro_roc_auc(probs, truths, K);
    r.roc_auc = m.macro;
    r.per_class_auc = m.per_class;
    if (m.missing_class) r.warnings.push_back("class absent from truths; excluded from macro ROC-AUC");
  }
  const PrfReport prf = prf_accuracy(predicted, truths, K);
  r.accuracy = prf.accuracy;
  r.confusion = prf.confusion;
  if (K == 2) {
    r.precision = prf.per_class[1].precision;
    r.recall = prf.per_class[1].recall;
    r.f1 = prf.per_class[1].f1;
    if (prf.per_class[1].precision_undefined) r.warnings.push_back("positive class never predicted; precision set to 0");
  } else {
    r.precision = prf.macro_precision;
    r.recall = prf.macro_recall;
    r.f1 = prf.macro_f1;
    if (prf.zero_division) r.warnings.push_back("zero-denominator class contributes 0 to macro precision/recall");
  }
  return r;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["label"] = r.label_name;
  j["model"] = r.model;
  j["class_count"] = r.class_count;
  j["samples"] = r.samples;
  j["roc_auc"] = r.roc_auc;
  auto& pc = j["per_class_auc"] = nlohmann::ordered_json::array();
  for (const auto& a : r.per_class_auc) pc.push_back(a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json());
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["confusion"] = r.confusion;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string render_table(const std::vector<MetricsReport>& reports) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %-10s %7s %8s %9s %6s %6s\n", "Label", "Model", "ROC-AUC", "Accuracy",
                "Precision", "Recall", "F1");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-18s %-10s %7.2f %8.2f %9.2f %6.2f %6.2f\n", r.label_name.c_str(),
                  r.model.c_str(), r.roc_auc, r.accuracy, r.precision, r.recall, r.f1);
    out += line;
  }
  return out;
}

}  // namespace dsaqc::metrics
