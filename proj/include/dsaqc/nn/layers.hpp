#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dsaqc/nn/tensor.hpp"

namespace dsaqc::nn {

using ParamVisitor = std::function<void(Parameter&)>;
using BufferVisitor = std::function<void(const Buffer&)>;

/// Each layer offers a const `infer` path (no state touched, safe to share
/// across threads) and a `forward`/`backward` pair that caches what the
/// backward pass needs.

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding,
         bool bias = false);

  Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  /// Accumulates parameter gradients when trainable; returns dL/dx when asked.
  Tensor backward(const Tensor& dy, bool need_input_grad);

  /// Kaiming-normal (fan_out, ReLU gain) weights; zero bias.
  void init_kaiming(std::mt19937_64& rng);
  void visit(const ParamVisitor& fn);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }
  int output_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  /// Weight layout: [kh][kw][cin][cout], i.e. a (k*k*cin) x cout row-major matrix.
  Parameter weight;
  Parameter bias;
  bool has_bias = false;

 private:
  bool direct() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }
  void im2col(const Tensor& x, std::vector<float>& col, int oh, int ow) const;
  void col2im(const std::vector<float>& col, Tensor& dx, int oh, int ow) const;

  int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Tensor saved_input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels);

  /// Uses running statistics.
  Tensor infer(const Tensor& x) const;
  /// Training mode when `batch_stats`: normalizes with batch statistics and
  /// updates running ones; otherwise behaves like infer but caches for backward.
  Tensor forward(const Tensor& x, bool batch_stats);
  Tensor backward(const Tensor& dy);

  void visit(const ParamVisitor& fn);
  void visit_buffers(const BufferVisitor& fn);

  /// Replaces running statistics with those of `x` (data-dependent initialisation).
  void calibrate(const Tensor& x);

  Parameter gamma;
  Parameter beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

 private:
  int channels_ = 0;
  bool saved_batch_stats_ = false;
  Tensor saved_xhat_;
  std::vector<float> saved_inv_std_;
};

class ReLU {
 public:
  static Tensor infer(Tensor x);
  Tensor forward(Tensor x);
  Tensor backward(Tensor dy) const;

 private:
  std::vector<std::uint8_t> mask_;
};

/// 3x3 / stride 2 / pad 1 max pooling of the stem. Only used in frozen layers.
Tensor max_pool_3x3s2(const Tensor& x);

/// [N,H,W,C] -> [N,1,1,C].
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, int h, int w);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  Tensor infer(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  /// PyTorch default: U(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void init_default(std::mt19937_64& rng);
  void visit(const ParamVisitor& fn);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  /// Layout [out][in].
  Parameter weight;
  Parameter bias;

 private:
  int in_ = 0, out_ = 0;
  Tensor saved_input_;
};

class Dropout {
 public:
  explicit Dropout(float p = 0.0f) : p_(p) {}
  Tensor forward(Tensor x, std::mt19937_64& rng);
  Tensor backward(Tensor dy) const;
  float p() const { return p_; }

 private:
  float p_;
  std::vector<float> scale_;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dL/dlogits, same shape as logits
};

/// Mean softmax cross-entropy. With class weights, matches the weighted-mean
/// reduction: sum_i w[y_i] * nll_i / sum_i w[y_i].
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<double>& class_weights = {});

/// Row-wise softmax of an [N,1,1,K] tensor, in double precision.
std::vector<std::vector<double>> softmax_rows(const Tensor& logits);

}  // namespace dsaqc::nn
