#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dsaqc/image.hpp"
#include "dsaqc/labels.hpp"
#include "dsaqc/nn/resnet.hpp"

namespace dsaqc {

using nn::BackboneDepth;

struct TrainConfig {
  int epochs = 10;
  double weight_decay = 1e-4;
  double dropout = 0.2;
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int input_side = 224;
  /// Load backbone weights from `checkpoint_dir/resnet<depth>.weights`.
  bool pretrained = false;
  std::filesystem::path checkpoint_dir;
  /// Randomly initialised backbones get batch-norm statistics from this many
  /// training images before the trunk is frozen.
  int calibration_images = 64;
  /// Class-weight the validation loss used for model selection.
  bool weighted_validation_loss = false;

  void validate() const;
};

/// w_c = N / (K * n_c): inverse frequency, so the mean weight over the N samples is 1.
std::vector<double> class_weights(std::span<const int> class_counts);

/// Freshly built per-label network plus what it was built for.
struct LabelModel {
  BackboneDepth variant = BackboneDepth::r18;
  std::unique_ptr<nn::ResNet> network;
};

/// Residual backbone with a dropout + linear head over `class_count` logits.
/// Only the last three residual blocks and the head stay trainable.
/// Throws NotFoundError when `pretrained` is set and the registry lacks the file.
LabelModel build_model(BackboneDepth variant, int class_count, double dropout, bool pretrained,
                       std::uint64_t seed, const std::filesystem::path& checkpoint_dir = {});

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainedLabelModel {
  std::string label_name;
  BackboneDepth variant = BackboneDepth::r18;
  int class_count = 0;
  int input_side = 224;
  std::uint64_t taxonomy_hash = 0;
  std::shared_ptr<nn::ResNet> network;
  std::vector<EpochLoss> history;
  double best_validation_loss = 0.0;
  int best_epoch = 0;
};

struct LabeledImage {
  const MinIPImage* image = nullptr;
  int target = 0;
};

/// Grayscale [0,1] images resized to `side` x `side`, replicated to three
/// channels and standardised with the ImageNet channel statistics.
nn::Tensor to_network_input(std::span<const Image2D* const> images, int side);

/// Class-weighted cross-entropy with AdamW for exactly `config.epochs` epochs;
/// returns the trainable state from the epoch with the lowest validation loss.
TrainedLabelModel train_label_model(std::span<const LabeledImage> train_set, std::span<const LabeledImage> val_set,
                                    const LabelDefinition& label, BackboneDepth variant, const TrainConfig& config);

/// Lowest best_validation_loss; ties go to the shallower backbone.
TrainedLabelModel select_best(std::span<const TrainedLabelModel> candidates);

struct LabelPrediction {
  std::vector<double> probabilities;
  int predicted = 0;
};

struct PredictionRecord {
  std::string image_id;
  std::map<std::string, LabelPrediction> labels;
};

using Ensemble = std::map<std::string, TrainedLabelModel>;

PredictionRecord predict(const Ensemble& ensemble, const MinIPImage& image);
std::vector<PredictionRecord> predict_batch(const Ensemble& ensemble, std::span<const MinIPImage> images,
                                            int batch_size = 32);

/// Long format: image_id,label,predicted,probabilities (semicolon-separated).
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// Throws ValidationError unless every pixel lies in [0,1].
void require_normalized(const MinIPImage& image);

}  // namespace dsaqc
