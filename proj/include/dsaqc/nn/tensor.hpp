#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dsaqc::nn {

/// Dense float tensor in NHWC order. Rank-2 data (batch x features) uses h = w = 1.
struct Tensor {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_, float fill = 0.0f)
      : n(n_), h(h_), w(w_), c(c_), data(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(n) * h * w; }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  float& at(int in, int ih, int iw, int ic) {
    return data[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic];
  }
  float at(int in, int ih, int iw, int ic) const {
    return data[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic];
  }
  bool same_shape(const Tensor& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }
  std::string shape_string() const;

  /// Samples [first, first + count) of the batch.
  Tensor slice(int first, int count) const;
};

/// Concatenates tensors of equal per-sample shape along the batch axis.
Tensor concat_batch(std::span<const Tensor* const> parts);

/// A learnable array with its gradient accumulator.
struct Parameter {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;
  bool trainable = true;

  void resize(std::size_t n) {
    value.assign(n, 0.0f);
    grad.assign(n, 0.0f);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

/// Non-learned state saved with a model (batch-norm running statistics).
struct Buffer {
  std::string name;
  std::vector<float>* values;
};

}  // namespace dsaqc::nn
