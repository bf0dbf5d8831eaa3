#pragma once

#include <filesystem>

#include "dsaqc/classifier.hpp"

namespace dsaqc::checkpoint {

/// Single-file model blob: magic, a JSON header (label, variant, class count,
/// input side, taxonomy hash, training history) and every parameter and
/// running-statistics array by name.
void save_model(const std::filesystem::path& path, const TrainedLabelModel& model);
TrainedLabelModel load_model(const std::filesystem::path& path);

/// Backbone weight blob for the pretrained registry. Tensors are matched by
/// torchvision-style names; the classification head is never loaded.
void save_backbone_weights(const std::filesystem::path& path, nn::ResNet& network);
void load_backbone_weights(const std::filesystem::path& path, nn::ResNet& network);

std::filesystem::path registry_path(const std::filesystem::path& dir, BackboneDepth depth);

/// Per-epoch loss log: epoch,train_loss,validation_loss.
void write_loss_log(const std::filesystem::path& path, const TrainedLabelModel& model);

}  // namespace dsaqc::checkpoint
