#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsaqc/classifier.hpp"
#include "dsaqc/labels.hpp"
#include "dsaqc/phantom.hpp"
#include "dsaqc/suitability.hpp"

namespace dsaqc {

/// Options of every subcommand. JSON layout (all keys optional):
///   seed                          integer
///   phantom.{n_patients, images_per_patient_min, images_per_patient_max,
///            image_side, frames, noise_level, rating_subset,
///            flip_if_success, flip_if_failure, priors{<label>: [p...]},
///            rater_error{<rater>: p}}
///   split.{train, validation, test, candidates, fraction_tolerance}
///   train.{epochs, weight_decay, dropout, learning_rate, batch_size,
///          input_side, pretrained, checkpoint_dir, calibration_images,
///          weighted_validation_loss, backbones[18|34|50], labels[...]}
///   filter.{neuro_imaging, skull_visibility, contrast_fluid, dsa, motion_artefact}
///   agreement.{reference_rater, threshold}
///   explain.{alpha, max_images}
struct PipelineConfig {
  std::uint64_t seed = 0;
  phantom::PhantomSpec phantom;
  SplitOptions split;
  TrainConfig train;
  std::vector<int> backbones = {18, 34, 50};
  /// Labels to train; empty means all nine.
  std::vector<std::string> labels;
  RuleSet filter;
  std::string reference_rater = "expert";
  double agreement_threshold = 0.81;
  double overlay_alpha = 0.5;
  /// 0 = every image.
  int explain_max_images = 0;

  /// Pushes `seed` into the phantom, split and training settings.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

/// Throws SchemaError on unknown keys or wrongly typed values.
PipelineConfig parse_config(const std::string& json_text, const std::string& origin = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);
std::string to_json(const PipelineConfig& config);
/// Writes `config.json` into `dir`.
void echo_config(const PipelineConfig& config, const std::filesystem::path& dir);

}  // namespace dsaqc
