#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dsaqc/nn/layers.hpp"

namespace dsaqc::nn {

enum class BackboneDepth : int { r18 = 18, r34 = 34, r50 = 50 };

BackboneDepth depth_from_int(int depth);
std::string depth_name(BackboneDepth depth);  // "ResNet-34"

class ResidualBlock {
 public:
  virtual ~ResidualBlock() = default;
  virtual Tensor infer(const Tensor& x) const = 0;
  /// Caches activations for backward; `batch_stats` switches batch norm to training mode.
  virtual Tensor forward(const Tensor& x, bool batch_stats) = 0;
  virtual Tensor backward(const Tensor& dy, bool need_input_grad) = 0;
  /// Forward pass that first resets every batch norm's running statistics to
  /// the statistics of its input.
  virtual Tensor calibrate(const Tensor& x) = 0;
  virtual void init(std::mt19937_64& rng) = 0;
  virtual void visit(const ParamVisitor& fn) = 0;
  virtual void visit_buffers(const BufferVisitor& fn) = 0;
  virtual int out_channels() const = 0;
};

/// Two 3x3 convolutions with an identity or 1x1-projection shortcut.
class BasicBlock final : public ResidualBlock {
 public:
  BasicBlock(const std::string& name, int in_channels, int channels, int stride);
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool batch_stats) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;
  Tensor calibrate(const Tensor& x) override;
  void init(std::mt19937_64& rng) override;
  void visit(const ParamVisitor& fn) override;
  void visit_buffers(const BufferVisitor& fn) override;
  int out_channels() const override { return conv2_.out_channels(); }

 private:
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
  ReLU relu1_, relu_out_;
  bool projection_ = false;
  Conv2d down_conv_;
  BatchNorm2d down_bn_;
};

/// 1x1 reduce, 3x3 (strided), 1x1 expand by 4, torchvision v1.5 layout.
class Bottleneck final : public ResidualBlock {
 public:
  Bottleneck(const std::string& name, int in_channels, int width, int stride);
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool batch_stats) override;
  Tensor backward(const Tensor& dy, bool need_input_grad) override;
  Tensor calibrate(const Tensor& x) override;
  void init(std::mt19937_64& rng) override;
  void visit(const ParamVisitor& fn) override;
  void visit_buffers(const BufferVisitor& fn) override;
  int out_channels() const override { return conv3_.out_channels(); }

 private:
  Conv2d conv1_, conv2_, conv3_;
  BatchNorm2d bn1_, bn2_, bn3_;
  ReLU relu1_, relu2_, relu_out_;
  bool projection_ = false;
  Conv2d down_conv_;
  BatchNorm2d down_bn_;
};

/// Residual classifier: 7x7 stem, four stages, global average pooling, dropout,
/// linear head. The last `trainable_blocks` residual blocks and the head are the
/// only parameters left trainable; everything before them (including batch-norm
/// running statistics) is frozen.
///
/// Trainable blocks in network order:
///   ResNet-18: layer3.1, layer4.0, layer4.1
///   ResNet-34: layer3.5, layer4.0, layer4.1
///   ResNet-50: layer4.0, layer4.1, layer4.2
class ResNet {
 public:
  static constexpr int kTrainableBlocks = 3;

  ResNet(BackboneDepth depth, int class_count, float dropout, std::uint64_t seed);

  BackboneDepth depth() const { return depth_; }
  int class_count() const { return fc_.out_features(); }
  float dropout() const { return dropout_.p(); }
  int feature_channels() const { return fc_.in_features(); }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  int frozen_block_count() const { return block_count() - kTrainableBlocks; }

  /// Frozen part: stem and leading blocks. Input is [N,S,S,3].
  Tensor infer_prefix(const Tensor& input) const;
  /// Trainable blocks in inference mode; yields the final feature maps.
  Tensor infer_tail(const Tensor& prefix_out) const;
  Tensor infer_features(const Tensor& input) const { return infer_tail(infer_prefix(input)); }
  /// Pool + linear (dropout is inactive at inference).
  Tensor infer_head(const Tensor& features) const;
  Tensor infer(const Tensor& input) const { return infer_head(infer_features(input)); }

  /// Training-mode pass over the trainable part; returns logits.
  Tensor forward_tail(const Tensor& prefix_out, std::mt19937_64& dropout_rng);
  /// Accumulates gradients of the trainable parameters.
  void backward_tail(const Tensor& dlogits);

  /// d logit[target] / d features for an inference-mode head.
  Tensor head_input_gradient(const Tensor& features, int target_class) const;

  /// Sets running statistics of every batch norm from a calibration batch.
  void calibrate_statistics(const Tensor& input);

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> trainable_parameters();
  std::vector<Buffer> buffers();
  void zero_grad();

 private:
  void apply_freezing();

  BackboneDepth depth_;
  Conv2d stem_conv_;
  BatchNorm2d stem_bn_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
  Dropout dropout_;
  Linear fc_;
  int feature_h_ = 0, feature_w_ = 0;
};

}  // namespace dsaqc::nn
