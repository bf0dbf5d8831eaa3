#include "dsaqc/nn/resnet.hpp"

#include <algorithm>

#include "dsaqc/errors.hpp"

namespace dsaqc::nn {

BackboneDepth depth_from_int(int depth) {
  switch (depth) {
    case 18: return BackboneDepth::r18;
    case 34: return BackboneDepth::r34;
    case 50: return BackboneDepth::r50;
    default: throw ValidationError("unsupported backbone depth " + std::to_string(depth) + " (expected 18, 34 or 50)");
  }
}

std::string depth_name(BackboneDepth depth) { return "ResNet-" + std::to_string(static_cast<int>(depth)); }

namespace {

Tensor add(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
  return a;
}

void add_into(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

Tensor calibrated(BatchNorm2d& bn, const Tensor& x) {
  bn.calibrate(x);
  return bn.infer(x);
}

}  // namespace

// ---------------------------------------------------------------- BasicBlock

BasicBlock::BasicBlock(const std::string& name, int in_channels, int channels, int stride)
    : conv1_(name + ".conv1", in_channels, channels, 3, stride, 1),
      conv2_(name + ".conv2", channels, channels, 3, 1, 1),
      bn1_(name + ".bn1", channels),
      bn2_(name + ".bn2", channels),
      projection_(stride != 1 || in_channels != channels) {
  if (projection_) {
    down_conv_ = Conv2d(name + ".downsample.0", in_channels, channels, 1, stride, 0);
    down_bn_ = BatchNorm2d(name + ".downsample.1", channels);
  }
}

Tensor BasicBlock::infer(const Tensor& x) const {
  Tensor y = ReLU::infer(bn1_.infer(conv1_.infer(x)));
  y = bn2_.infer(conv2_.infer(y));
  return ReLU::infer(add(std::move(y), projection_ ? down_bn_.infer(down_conv_.infer(x)) : x));
}

Tensor BasicBlock::forward(const Tensor& x, bool batch_stats) {
  Tensor y = relu1_.forward(bn1_.forward(conv1_.forward(x), batch_stats));
  y = bn2_.forward(conv2_.forward(y), batch_stats);
  Tensor shortcut = projection_ ? down_bn_.forward(down_conv_.forward(x), batch_stats) : x;
  return relu_out_.forward(add(std::move(y), shortcut));
}

Tensor BasicBlock::backward(const Tensor& dy, bool need_input_grad) {
  const Tensor g = relu_out_.backward(dy);
  Tensor d = conv2_.backward(bn2_.backward(g), true);
  d = conv1_.backward(bn1_.backward(relu1_.backward(std::move(d))), need_input_grad);
  if (projection_) {
    Tensor ds = down_conv_.backward(down_bn_.backward(g), need_input_grad);
    if (need_input_grad) add_into(d, ds);
  } else if (need_input_grad) {
    add_into(d, g);
  }
  return d;
}

Tensor BasicBlock::calibrate(const Tensor& x) {
  Tensor y = ReLU::infer(calibrated(bn1_, conv1_.infer(x)));
  y = calibrated(bn2_, conv2_.infer(y));
  return ReLU::infer(add(std::move(y), projection_ ? calibrated(down_bn_, down_conv_.infer(x)) : x));
}

void BasicBlock::init(std::mt19937_64& rng) {
  conv1_.init_kaiming(rng);
  conv2_.init_kaiming(rng);
  if (projection_) down_conv_.init_kaiming(rng);
}

void BasicBlock::visit(const ParamVisitor& fn) {
  conv1_.visit(fn);
  bn1_.visit(fn);
  conv2_.visit(fn);
  bn2_.visit(fn);
  if (projection_) {
    down_conv_.visit(fn);
    down_bn_.visit(fn);
  }
}

void BasicBlock::visit_buffers(const BufferVisitor& fn) {
  bn1_.visit_buffers(fn);
  bn2_.visit_buffers(fn);
  if (projection_) down_bn_.visit_buffers(fn);
}

// ---------------------------------------------------------------- Bottleneck

Bottleneck::Bottleneck(const std::string& name, int in_channels, int width, int stride)
    : conv1_(name + ".conv1", in_channels, width, 1, 1, 0),
      conv2_(name + ".conv2", width, width, 3, stride, 1),
      conv3_(name + ".conv3", width, width * 4, 1, 1, 0),
      bn1_(name + ".bn1", width),
      bn2_(name + ".bn2", width),
      bn3_(name + ".bn3", width * 4),
      projection_(stride != 1 || in_channels != width * 4) {
  if (projection_) {
    down_conv_ = Conv2d(name + ".downsample.0", in_channels, width * 4, 1, stride, 0);
    down_bn_ = BatchNorm2d(name + ".downsample.1", width * 4);
  }
}

Tensor Bottleneck::infer(const Tensor& x) const {
  Tensor y = ReLU::infer(bn1_.infer(conv1_.infer(x)));
  y = ReLU::infer(bn2_.infer(conv2_.infer(y)));
  y = bn3_.infer(conv3_.infer(y));
  return ReLU::infer(add(std::move(y), projection_ ? down_bn_.infer(down_conv_.infer(x)) : x));
}

Tensor Bottleneck::forward(const Tensor& x, bool batch_stats) {
  Tensor y = relu1_.forward(bn1_.forward(conv1_.forward(x), batch_stats));
  y = relu2_.forward(bn2_.forward(conv2_.forward(y), batch_stats));
  y = bn3_.forward(conv3_.forward(y), batch_stats);
  Tensor shortcut = projection_ ? down_bn_.forward(down_conv_.forward(x), batch_stats) : x;
  return relu_out_.forward(add(std::move(y), shortcut));
}

Tensor Bottleneck::backward(const Tensor& dy, bool need_input_grad) {
  const Tensor g = relu_out_.backward(dy);
  Tensor d = conv3_.backward(bn3_.backward(g), true);
  d = conv2_.backward(bn2_.backward(relu2_.backward(std::move(d))), true);
  d = conv1_.backward(bn1_.backward(relu1_.backward(std::move(d))), need_input_grad);
  if (projection_) {
    Tensor ds = down_conv_.backward(down_bn_.backward(g), need_input_grad);
    if (need_input_grad) add_into(d, ds);
  } else if (need_input_grad) {
    add_into(d, g);
  }
  return d;
}

Tensor Bottleneck::calibrate(const Tensor& x) {
  Tensor y = ReLU::infer(calibrated(bn1_, conv1_.infer(x)));
  y = ReLU::infer(calibrated(bn2_, conv2_.infer(y)));
  y = calibrated(bn3_, conv3_.infer(y));
  return ReLU::infer(add(std::move(y), projection_ ? calibrated(down_bn_, down_conv_.infer(x)) : x));
}

void Bottleneck::init(std::mt19937_64& rng) {
  conv1_.init_kaiming(rng);
  conv2_.init_kaiming(rng);
  conv3_.init_kaiming(rng);
  if (projection_) down_conv_.init_kaiming(rng);
}

void Bottleneck::visit(const ParamVisitor& fn) {
  conv1_.visit(fn);
  bn1_.visit(fn);
  conv2_.visit(fn);
  bn2_.visit(fn);
  conv3_.visit(fn);
  bn3_.visit(fn);
  if (projection_) {
    down_conv_.visit(fn);
    down_bn_.visit(fn);
  }
}

void Bottleneck::visit_buffers(const BufferVisitor& fn) {
  bn1_.visit_buffers(fn);
  bn2_.visit_buffers(fn);
  bn3_.visit_buffers(fn);
  if (projection_) down_bn_.visit_buffers(fn);
}

// ---------------------------------------------------------------- ResNet

ResNet::ResNet(BackboneDepth depth, int class_count, float dropout, std::uint64_t seed)
    : depth_(depth), stem_conv_("conv1", 3, 64, 7, 2, 3), stem_bn_("bn1", 64), dropout_(dropout) {
  if (class_count < 2) throw ValidationError("a classifier needs at least two classes");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw ValidationError("dropout must lie in [0,1)");
  const bool bottleneck = depth == BackboneDepth::r50;
  std::vector<int> per_stage;
  switch (depth) {
    case BackboneDepth::r18: per_stage = {2, 2, 2, 2}; break;
    case BackboneDepth::r34:
    case BackboneDepth::r50: per_stage = {3, 4, 6, 3}; break;
  }
  int in_channels = 64;
  const int widths[4] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    for (int b = 0; b < per_stage[stage]; ++b) {
      const std::string name = "layer" + std::to_string(stage + 1) + "." + std::to_string(b);
      const int stride = (b == 0 && stage > 0) ? 2 : 1;
      if (bottleneck) {
        blocks_.push_back(std::make_unique<Bottleneck>(name, in_channels, widths[stage], stride));
      } else {
        blocks_.push_back(std::make_unique<BasicBlock>(name, in_channels, widths[stage], stride));
      }
      in_channels = blocks_.back()->out_channels();
    }
  }
  fc_ = Linear("fc", in_channels, class_count);

  std::mt19937_64 rng(seed);
  stem_conv_.init_kaiming(rng);
  for (auto& b : blocks_) b->init(rng);
  fc_.init_default(rng);
  apply_freezing();
}

void ResNet::apply_freezing() {
  auto freeze = [](Parameter& p) {
    p.trainable = false;
    std::vector<float>().swap(p.grad);
  };
  auto thaw = [](Parameter& p) {
    p.trainable = true;
    p.grad.assign(p.value.size(), 0.0f);
  };
  stem_conv_.visit(freeze);
  stem_bn_.visit(freeze);
  for (int i = 0; i < block_count(); ++i) blocks_[i]->visit(i < frozen_block_count() ? ParamVisitor(freeze) : ParamVisitor(thaw));
  fc_.visit(thaw);
}

Tensor ResNet::infer_prefix(const Tensor& input) const {
  if (input.c != 3) throw ValidationError("backbone expects 3-channel input, got " + input.shape_string());
  Tensor x = max_pool_3x3s2(ReLU::infer(stem_bn_.infer(stem_conv_.infer(input))));
  for (int i = 0; i < frozen_block_count(); ++i) x = blocks_[i]->infer(x);
  return x;
}

Tensor ResNet::infer_tail(const Tensor& prefix_out) const {
  Tensor x = prefix_out;
  for (int i = frozen_block_count(); i < block_count(); ++i) x = blocks_[i]->infer(x);
  return x;
}

Tensor ResNet::infer_head(const Tensor& features) const { return fc_.infer(global_avg_pool(features)); }

Tensor ResNet::forward_tail(const Tensor& prefix_out, std::mt19937_64& dropout_rng) {
  Tensor x = prefix_out;
  for (int i = frozen_block_count(); i < block_count(); ++i) x = blocks_[i]->forward(x, true);
  feature_h_ = x.h;
  feature_w_ = x.w;
  return fc_.forward(dropout_.forward(global_avg_pool(x), dropout_rng));
}

void ResNet::backward_tail(const Tensor& dlogits) {
  Tensor d = global_avg_pool_backward(dropout_.backward(fc_.backward(dlogits)), feature_h_, feature_w_);
  for (int i = block_count() - 1; i >= frozen_block_count(); --i) {
    d = blocks_[i]->backward(d, i > frozen_block_count());
  }
}

Tensor ResNet::head_input_gradient(const Tensor& features, int target_class) const {
  if (target_class < 0 || target_class >= class_count()) throw ValidationError("target class out of range");
  Tensor dpool(features.n, 1, 1, features.c);
  for (int n = 0; n < features.n; ++n) {
    for (int c = 0; c < features.c; ++c) {
      dpool.data[static_cast<std::size_t>(n) * features.c + c] =
          fc_.weight.value[static_cast<std::size_t>(target_class) * fc_.in_features() + c];
    }
  }
  return global_avg_pool_backward(dpool, features.h, features.w);
}

void ResNet::calibrate_statistics(const Tensor& input) {
  if (input.c != 3) throw ValidationError("backbone expects 3-channel input, got " + input.shape_string());
  stem_bn_.calibrate(stem_conv_.infer(input));
  Tensor x = max_pool_3x3s2(ReLU::infer(stem_bn_.infer(stem_conv_.infer(input))));
  for (auto& b : blocks_) x = b->calibrate(x);
}

std::vector<Parameter*> ResNet::parameters() {
  std::vector<Parameter*> out;
  auto collect = [&out](Parameter& p) { out.push_back(&p); };
  stem_conv_.visit(collect);
  stem_bn_.visit(collect);
  for (auto& b : blocks_) b->visit(collect);
  fc_.visit(collect);
  return out;
}

std::vector<Parameter*> ResNet::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

std::vector<Buffer> ResNet::buffers() {
  std::vector<Buffer> out;
  auto collect = [&out](const Buffer& b) { out.push_back(b); };
  stem_bn_.visit_buffers(collect);
  for (auto& b : blocks_) b->visit_buffers(collect);
  return out;
}

void ResNet::zero_grad() {
  for (Parameter* p : trainable_parameters()) p->zero_grad();
}

}  // namespace dsaqc::nn
