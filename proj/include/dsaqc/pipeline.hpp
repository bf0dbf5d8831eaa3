#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dsaqc/classifier.hpp"
#include "dsaqc/config.hpp"
#include "dsaqc/labels.hpp"
#include "dsaqc/metrics.hpp"

namespace dsaqc::pipeline {

/// Every sequence (file or directory) directly inside `dir`, in name order,
/// as normalized MinIPs.
std::vector<MinIPImage> ingest_directory(const std::filesystem::path& dir);

/// One record per image; rejects duplicates.
std::map<std::string, const AnnotationRecord*> index_by_image(const std::vector<AnnotationRecord>& records);

using Progress = std::function<void(const std::string&)>;

struct LabelRun {
  std::vector<TrainedLabelModel> candidates;
  TrainedLabelModel best;
};

/// For each requested label, trains every backbone on the train split, keeps
/// the one with the lowest validation loss. Labels run on `jobs` threads.
std::map<std::string, LabelRun> train_all(const std::vector<MinIPImage>& images,
                                          const std::vector<AnnotationRecord>& annotations,
                                          const SplitAssignment& split, const PipelineConfig& config, int jobs = 1,
                                          const Progress& progress = {});

Ensemble ensemble_of(const std::map<std::string, LabelRun>& runs);

/// models/<label slug>.model for each model; candidates go to
/// models/candidates/<slug>_resnet<d>.model.
void save_runs(const std::map<std::string, LabelRun>& runs, const std::filesystem::path& dir);
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);

struct Evaluation {
  std::vector<metrics::MetricsReport> reports;
  /// Per label, per class: ROC points of the one-vs-rest (binary: positive) score.
  std::map<std::string, std::vector<std::vector<metrics::RocPoint>>> roc;
};

/// Scores predictions on the annotated images among `image_ids`.
Evaluation evaluate(const Ensemble& ensemble, const std::vector<PredictionRecord>& predictions,
                    const std::vector<AnnotationRecord>& annotations, const std::vector<std::string>& image_ids);

/// ROC and loss-curve SVGs into `dir`.
void write_plots(const Evaluation& evaluation, const Ensemble& ensemble, const std::filesystem::path& dir);

}  // namespace dsaqc::pipeline
