#include "dsaqc/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "dsaqc/colormap.hpp"
#include "dsaqc/errors.hpp"
#include "dsaqc/png_io.hpp"

namespace dsaqc {

ResNetGradCam::ResNetGradCam(const TrainedLabelModel& model) : model_(model) {
  if (!model_.network) throw ValidationError("model '" + model_.label_name + "' has no network");
}

nn::Tensor ResNetGradCam::feature_maps(const Image2D& image) const {
  const Image2D* ptr = &image;
  return model_.network->infer_features(to_network_input({&ptr, 1}, model_.input_side));
}

double ResNetGradCam::logit(const nn::Tensor& features, int target_class) const {
  const nn::Tensor logits = model_.network->infer_head(features);
  return logits.data.at(target_class);
}

nn::Tensor ResNetGradCam::logit_gradient(const nn::Tensor& features, int target_class) const {
  return model_.network->head_input_gradient(features, target_class);
}

ConvPoolLinear::ConvPoolLinear(int in_channels, int channels, int kernel, int class_count)
    : conv("conv", in_channels, channels, kernel, 1, kernel / 2, true), head("head", channels, class_count) {}

nn::Tensor ConvPoolLinear::feature_maps(const Image2D& image) const {
  nn::Tensor x(1, image.height, image.width, conv.in_channels());
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      for (int k = 0; k < x.c; ++k) x.at(0, r, c, k) = static_cast<float>(image.at(r, c));
    }
  }
  return conv.infer(x);
}

double ConvPoolLinear::logit(const nn::Tensor& features, int target_class) const {
  return head.infer(nn::global_avg_pool(features)).data.at(target_class);
}

nn::Tensor ConvPoolLinear::logit_gradient(const nn::Tensor& features, int target_class) const {
  if (target_class < 0 || target_class >= class_count()) throw ValidationError("target class out of range");
  nn::Tensor d(1, 1, 1, features.c);
  for (int c = 0; c < features.c; ++c) {
    d.data[c] = head.weight.value[static_cast<std::size_t>(target_class) * head.in_features() + c];
  }
  return nn::global_avg_pool_backward(d, features.h, features.w);
}

ActivationMap grad_cam(const GradCamModel& model, const MinIPImage& image, int target_class,
                       const std::string& label_name) {
  if (!model.has_conv_stage()) throw UnsupportedError("Grad-CAM needs a model with convolutional feature maps");
  if (target_class < 0 || target_class >= model.class_count()) {
    throw ValidationError("target class " + std::to_string(target_class) + " invalid for '" + label_name +
                          "' with " + std::to_string(model.class_count()) + " classes");
  }
  if (image.image.size() == 0) throw ValidationError("empty image '" + image.image_id + "'");

  const nn::Tensor features = model.feature_maps(image.image);
  const nn::Tensor grad = model.logit_gradient(features, target_class);
  if (!grad.same_shape(features)) throw ValidationError("gradient shape does not match feature maps");

  ActivationMap out;
  out.image_id = image.image_id;
  out.label_name = label_name;
  out.target_class = target_class;
  const int fh = features.h, fw = features.w, C = features.c;
  out.weights.assign(C, 0.0);
  for (int r = 0; r < fh; ++r) {
    for (int c = 0; c < fw; ++c) {
      for (int k = 0; k < C; ++k) out.weights[k] += grad.at(0, r, c, k);
    }
  }
  for (double& w : out.weights) w /= static_cast<double>(fh) * fw;

  Image2D cam(fh, fw);
  for (int r = 0; r < fh; ++r) {
    for (int c = 0; c < fw; ++c) {
      double s = 0.0;
      for (int k = 0; k < C; ++k) s += out.weights[k] * features.at(0, r, c, k);
      cam.at(r, c) = std::max(0.0, s);
    }
  }
  out.raw = resize_bilinear(cam, image.height(), image.width());
  for (double& v : out.raw.pixels) v = std::max(0.0, v);

  const auto [lo_it, hi_it] = std::minmax_element(out.raw.pixels.begin(), out.raw.pixels.end());
  const double lo = *lo_it, hi = *hi_it;
  out.heatmap = Image2D(image.height(), image.width());
  if (!(hi > 0.0)) {
    out.zero_map = true;
    return out;
  }
  if (!(hi > lo)) {
    // Constant positive evidence everywhere.
    std::fill(out.heatmap.pixels.begin(), out.heatmap.pixels.end(), 1.0);
    return out;
  }
  for (std::size_t i = 0; i < out.raw.size(); ++i) {
    out.heatmap.pixels[i] = (out.raw.pixels[i] - lo) / (hi - lo);
  }
  return out;
}

ActivationMap grad_cam(const TrainedLabelModel& model, const MinIPImage& image, int target_class) {
  return grad_cam(ResNetGradCam(model), image, target_class, model.label_name);
}

std::vector<std::uint8_t> overlay_pixels(const ActivationMap& map, const MinIPImage& image, double alpha) {
  if (map.heatmap.height != image.height() || map.heatmap.width != image.width()) {
    throw ValidationError("heatmap " + std::to_string(map.heatmap.height) + "x" + std::to_string(map.heatmap.width) +
                          " does not match image " + std::to_string(image.height()) + "x" +
                          std::to_string(image.width()));
  }
  std::vector<std::uint8_t> rgb(image.image.size() * 3);
  for (std::size_t i = 0; i < image.image.size(); ++i) {
    const double base = std::clamp(image.image.pixels[i], 0.0, 1.0) * 255.0;
    const double h = std::clamp(map.heatmap.pixels[i], 0.0, 1.0);
    const double a = alpha * h;
    const Rgb8 tint = viridis(h);
    for (int c = 0; c < 3; ++c) {
      const double v = base * (1.0 - a) + tint[c] * a;
      rgb[3 * i + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return rgb;
}

void export_overlay(const ActivationMap& map, const MinIPImage& image, const std::filesystem::path& path,
                    double alpha) {
  png::write_rgb8(path, image.height(), image.width(), overlay_pixels(map, image, alpha));
}

}  // namespace dsaqc
