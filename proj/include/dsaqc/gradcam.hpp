#pragma once

#include <filesystem>
#include <string>

#include "dsaqc/classifier.hpp"
#include "dsaqc/image.hpp"
#include "dsaqc/nn/layers.hpp"

namespace dsaqc {

/// What Grad-CAM needs from a classifier: the target feature maps for one image
/// and the gradient of a class logit with respect to them.
class GradCamModel {
 public:
  virtual ~GradCamModel() = default;
  virtual int class_count() const = 0;
  virtual bool has_conv_stage() const { return true; }
  /// [1,h,w,C] activations of the target layer.
  virtual nn::Tensor feature_maps(const Image2D& image) const = 0;
  virtual double logit(const nn::Tensor& features, int target_class) const = 0;
  virtual nn::Tensor logit_gradient(const nn::Tensor& features, int target_class) const = 0;
};

/// Trained residual model; the target layer is the output of the last residual block.
class ResNetGradCam final : public GradCamModel {
 public:
  explicit ResNetGradCam(const TrainedLabelModel& model);
  int class_count() const override { return model_.class_count; }
  nn::Tensor feature_maps(const Image2D& image) const override;
  double logit(const nn::Tensor& features, int target_class) const override;
  nn::Tensor logit_gradient(const nn::Tensor& features, int target_class) const override;

 private:
  const TrainedLabelModel& model_;
};

/// Single convolution, global average pooling and a linear head; a small model
/// with closed-form gradients.
class ConvPoolLinear final : public GradCamModel {
 public:
  ConvPoolLinear(int in_channels, int channels, int kernel, int class_count);
  int class_count() const override { return head.out_features(); }
  /// Image pixels are fed to every input channel.
  nn::Tensor feature_maps(const Image2D& image) const override;
  double logit(const nn::Tensor& features, int target_class) const override;
  nn::Tensor logit_gradient(const nn::Tensor& features, int target_class) const override;

  nn::Conv2d conv;
  nn::Linear head;
};

struct ActivationMap {
  std::string image_id;
  std::string label_name;
  int target_class = 0;
  /// Normalized map at the input image's shape.
  Image2D heatmap;
  /// Rectified, upsampled map before normalization.
  Image2D raw;
  /// Channel weights (spatial mean of the logit gradient).
  std::vector<double> weights;
  /// The rectified map was identically zero; heatmap is left at zero.
  bool zero_map = false;
};

ActivationMap grad_cam(const GradCamModel& model, const MinIPImage& image, int target_class,
                       const std::string& label_name = {});
ActivationMap grad_cam(const TrainedLabelModel& model, const MinIPImage& image, int target_class);

/// Grayscale base with the viridis-coloured heatmap blended in at alpha * h.
void export_overlay(const ActivationMap& map, const MinIPImage& image, const std::filesystem::path& path,
                    double alpha = 0.5);
/// The blended RGB8 raster export_overlay writes.
std::vector<std::uint8_t> overlay_pixels(const ActivationMap& map, const MinIPImage& image, double alpha = 0.5);

}  // namespace dsaqc
