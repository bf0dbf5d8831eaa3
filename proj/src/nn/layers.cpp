#include "dsaqc/nn/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsaqc/errors.hpp"

namespace dsaqc::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int padding, bool bias)
    : has_bias(bias), cin_(in_channels), cout_(out_channels), k_(kernel), stride_(stride), pad_(padding) {
  weight.name = name + ".weight";
  weight.resize(static_cast<std::size_t>(k_) * k_ * cin_ * cout_);
  if (has_bias) {
    this->bias.name = name + ".bias";
    this->bias.resize(cout_);
  }
}

void Conv2d::init_kaiming(std::mt19937_64& rng) {
  const double std = std::sqrt(2.0 / (static_cast<double>(cout_) * k_ * k_));
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std));
  for (float& v : weight.value) v = dist(rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

void Conv2d::visit(const ParamVisitor& fn) {
  fn(weight);
  if (has_bias) fn(bias);
}

void Conv2d::im2col(const Tensor& x, std::vector<float>& col, int oh, int ow) const {
  const std::size_t K = static_cast<std::size_t>(k_) * k_ * cin_;
  col.assign(static_cast<std::size_t>(x.n) * oh * ow * K, 0.0f);
  float* out = col.data();
  for (int n = 0; n < x.n; ++n) {
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo, out += K) {
        float* dst = out;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = y * stride_ - pad_ + ky;
          for (int kx = 0; kx < k_; ++kx, dst += cin_) {
            const int ix = xo * stride_ - pad_ + kx;
            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
            const float* src = &x.data[((static_cast<std::size_t>(n) * x.h + iy) * x.w + ix) * cin_];
            std::copy_n(src, cin_, dst);
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const std::vector<float>& col, Tensor& dx, int oh, int ow) const {
  const std::size_t K = static_cast<std::size_t>(k_) * k_ * cin_;
  const float* in = col.data();
  for (int n = 0; n < dx.n; ++n) {
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo, in += K) {
        const float* src = in;
        for (int ky = 0; ky < k_; ++ky) {
          const int iy = y * stride_ - pad_ + ky;
          for (int kx = 0; kx < k_; ++kx, src += cin_) {
            const int ix = xo * stride_ - pad_ + kx;
            if (iy < 0 || iy >= dx.h || ix < 0 || ix >= dx.w) continue;
            float* dst = &dx.data[((static_cast<std::size_t>(n) * dx.h + iy) * dx.w + ix) * cin_];
            for (int c = 0; c < cin_; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

Tensor Conv2d::infer(const Tensor& x) const {
  require(x.c == cin_, weight.name + ": expected " + std::to_string(cin_) + " input channels, got " + x.shape_string());
  const int oh = output_size(x.h), ow = output_size(x.w);
  require(oh > 0 && ow > 0, weight.name + ": input " + x.shape_string() + " too small");
  Tensor y(x.n, oh, ow, cout_);
  const int M = x.n * oh * ow;
  const int K = k_ * k_ * cin_;
  const float* a = x.ptr();
  std::vector<float> col;
  if (!direct()) {
    im2col(x, col, oh, ow);
    a = col.data();
  }
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, M, cout_, K, 1.0f, a, K, weight.value.data(), cout_, 0.0f,
              y.ptr(), cout_);
  if (has_bias) {
    for (int m = 0; m < M; ++m) {
      float* row = y.ptr() + static_cast<std::size_t>(m) * cout_;
      for (int c = 0; c < cout_; ++c) row[c] += bias.value[c];
    }
  }
  return y;
}

Tensor Conv2d::forward(const Tensor& x) {
  saved_input_ = x;
  return infer(x);
}

Tensor Conv2d::backward(const Tensor& dy, bool need_input_grad) {
  const Tensor& x = saved_input_;
  const int oh = output_size(x.h), ow = output_size(x.w);
  require(dy.n == x.n && dy.h == oh && dy.w == ow && dy.c == cout_, weight.name + ": gradient shape mismatch");
  const int M = x.n * oh * ow;
  const int K = k_ * k_ * cin_;
  std::vector<float> col;
  const float* a = x.ptr();
  if (weight.trainable) {
    if (!direct()) {
      im2col(x, col, oh, ow);
      a = col.data();
    }
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, cout_, M, 1.0f, a, K, dy.ptr(), cout_, 1.0f,
                weight.grad.data(), cout_);
  }
  if (has_bias && bias.trainable) {
    for (int m = 0; m < M; ++m) {
      const float* row = dy.ptr() + static_cast<std::size_t>(m) * cout_;
      for (int c = 0; c < cout_; ++c) bias.grad[c] += row[c];
    }
  }
  Tensor dx;
  if (need_input_grad) {
    dx = Tensor(x.n, x.h, x.w, x.c);
    if (direct()) {
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, M, K, cout_, 1.0f, dy.ptr(), cout_, weight.value.data(),
                  cout_, 0.0f, dx.ptr(), K);
    } else {
      std::vector<float> dcol(static_cast<std::size_t>(M) * K);
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, M, K, cout_, 1.0f, dy.ptr(), cout_, weight.value.data(),
                  cout_, 0.0f, dcol.data(), K);
      col2im(dcol, dx, oh, ow);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : running_mean(channels, 0.0f), running_var(channels, 1.0f), channels_(channels) {
  gamma.name = name + ".weight";
  gamma.value.assign(channels, 1.0f);
  gamma.grad.assign(channels, 0.0f);
  beta.name = name + ".bias";
  beta.resize(channels);
}

void BatchNorm2d::visit(const ParamVisitor& fn) {
  fn(gamma);
  fn(beta);
}

void BatchNorm2d::visit_buffers(const BufferVisitor& fn) {
  const std::string base = gamma.name.substr(0, gamma.name.size() - std::string(".weight").size());
  fn({base + ".running_mean", &running_mean});
  fn({base + ".running_var", &running_var});
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  require(x.c == channels_, gamma.name + ": channel mismatch " + x.shape_string());
  Tensor y = x;
  std::vector<float> scale(channels_), shift(channels_);
  for (int c = 0; c < channels_; ++c) {
    scale[c] = gamma.value[c] / std::sqrt(running_var[c] + eps);
    shift[c] = beta.value[c] - running_mean[c] * scale[c];
  }
  const std::size_t P = x.pixels();
  float* p = y.ptr();
  for (std::size_t i = 0; i < P; ++i, p += channels_) {
    for (int c = 0; c < channels_; ++c) p[c] = p[c] * scale[c] + shift[c];
  }
  return y;
}

namespace {

void channel_moments(const Tensor& x, std::vector<double>& mean, std::vector<double>& var) {
  const int C = x.c;
  mean.assign(C, 0.0);
  var.assign(C, 0.0);
  const std::size_t P = x.pixels();
  const float* p = x.ptr();
  for (std::size_t i = 0; i < P; ++i, p += C) {
    for (int c = 0; c < C; ++c) mean[c] += p[c];
  }
  for (int c = 0; c < C; ++c) mean[c] /= static_cast<double>(P);
  p = x.ptr();
  for (std::size_t i = 0; i < P; ++i, p += C) {
    for (int c = 0; c < C; ++c) {
      const double d = p[c] - mean[c];
      var[c] += d * d;
    }
  }
  for (int c = 0; c < C; ++c) var[c] /= static_cast<double>(P);
}

}  // namespace

void BatchNorm2d::calibrate(const Tensor& x) {
  require(x.c == channels_, gamma.name + ": channel mismatch " + x.shape_string());
  std::vector<double> mean, var;
  channel_moments(x, mean, var);
  for (int c = 0; c < channels_; ++c) {
    running_mean[c] = static_cast<float>(mean[c]);
    running_var[c] = static_cast<float>(var[c]);
  }
}

Tensor BatchNorm2d::forward(const Tensor& x, bool batch_stats) {
  require(x.c == channels_, gamma.name + ": channel mismatch " + x.shape_string());
  saved_batch_stats_ = batch_stats;
  saved_inv_std_.assign(channels_, 0.0f);
  std::vector<double> mean(channels_), var(channels_);
  const std::size_t P = x.pixels();
  if (batch_stats) {
    require(P > 1, gamma.name + ": batch statistics need more than one value per channel");
    channel_moments(x, mean, var);
    const double unbias = static_cast<double>(P) / static_cast<double>(P - 1);
    for (int c = 0; c < channels_; ++c) {
      running_mean[c] = static_cast<float>((1 - momentum) * running_mean[c] + momentum * mean[c]);
      running_var[c] = static_cast<float>((1 - momentum) * running_var[c] + momentum * var[c] * unbias);
    }
  } else {
    for (int c = 0; c < channels_; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }
  for (int c = 0; c < channels_; ++c) saved_inv_std_[c] = static_cast<float>(1.0 / std::sqrt(var[c] + eps));
  saved_xhat_ = Tensor(x.n, x.h, x.w, x.c);
  Tensor y(x.n, x.h, x.w, x.c);
  const float* in = x.ptr();
  float* xh = saved_xhat_.ptr();
  float* out = y.ptr();
  for (std::size_t i = 0; i < P; ++i) {
    for (int c = 0; c < channels_; ++c) {
      const std::size_t j = i * channels_ + c;
      xh[j] = static_cast<float>((in[j] - mean[c]) * saved_inv_std_[c]);
      out[j] = gamma.value[c] * xh[j] + beta.value[c];
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  require(dy.same_shape(saved_xhat_), gamma.name + ": gradient shape mismatch");
  const std::size_t P = dy.pixels();
  std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
  const float* g = dy.ptr();
  const float* xh = saved_xhat_.ptr();
  for (std::size_t i = 0; i < P; ++i) {
    for (int c = 0; c < channels_; ++c) {
      const std::size_t j = i * channels_ + c;
      sum_dy[c] += g[j];
      sum_dy_xhat[c] += static_cast<double>(g[j]) * xh[j];
    }
  }
  if (gamma.trainable) {
    for (int c = 0; c < channels_; ++c) gamma.grad[c] += static_cast<float>(sum_dy_xhat[c]);
  }
  if (beta.trainable) {
    for (int c = 0; c < channels_; ++c) beta.grad[c] += static_cast<float>(sum_dy[c]);
  }
  Tensor dx(dy.n, dy.h, dy.w, dy.c);
  float* out = dx.ptr();
  if (saved_batch_stats_) {
    const double inv_p = 1.0 / static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const std::size_t j = i * channels_ + c;
        const double k = gamma.value[c] * saved_inv_std_[c];
        out[j] = static_cast<float>(k * (g[j] - inv_p * sum_dy[c] - xh[j] * inv_p * sum_dy_xhat[c]));
      }
    }
  } else {
    for (std::size_t i = 0; i < P; ++i) {
      for (int c = 0; c < channels_; ++c) {
        const std::size_t j = i * channels_ + c;
        out[j] = g[j] * gamma.value[c] * saved_inv_std_[c];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU / pooling

Tensor ReLU::infer(Tensor x) {
  for (float& v : x.data) v = v > 0.0f ? v : 0.0f;
  return x;
}

Tensor ReLU::forward(Tensor x) {
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = x.data[i] > 0.0f;
    if (!mask_[i]) x.data[i] = 0.0f;
  }
  return x;
}

Tensor ReLU::backward(Tensor dy) const {
  require(dy.size() == mask_.size(), "relu: gradient shape mismatch");
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!mask_[i]) dy.data[i] = 0.0f;
  }
  return dy;
}

Tensor max_pool_3x3s2(const Tensor& x) {
  const int oh = (x.h + 2 - 3) / 2 + 1, ow = (x.w + 2 - 3) / 2 + 1;
  Tensor y(x.n, oh, ow, x.c, -std::numeric_limits<float>::infinity());
  for (int n = 0; n < x.n; ++n) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float* dst = &y.data[((static_cast<std::size_t>(n) * oh + oy) * ow + ox) * x.c];
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            if (ix < 0 || ix >= x.w) continue;
            const float* src = &x.data[((static_cast<std::size_t>(n) * x.h + iy) * x.w + ix) * x.c];
            for (int c = 0; c < x.c; ++c) dst[c] = std::max(dst[c], src[c]);
          }
        }
      }
    }
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n, 1, 1, x.c);
  const int hw = x.h * x.w;
  for (int n = 0; n < x.n; ++n) {
    std::vector<double> acc(x.c, 0.0);
    const float* p = &x.data[static_cast<std::size_t>(n) * hw * x.c];
    for (int i = 0; i < hw; ++i, p += x.c) {
      for (int c = 0; c < x.c; ++c) acc[c] += p[c];
    }
    for (int c = 0; c < x.c; ++c) y.data[static_cast<std::size_t>(n) * x.c + c] = static_cast<float>(acc[c] / hw);
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, int h, int w) {
  Tensor dx(dy.n, h, w, dy.c);
  const float inv = 1.0f / static_cast<float>(h * w);
  for (int n = 0; n < dy.n; ++n) {
    const float* g = &dy.data[static_cast<std::size_t>(n) * dy.c];
    float* p = &dx.data[static_cast<std::size_t>(n) * h * w * dy.c];
    for (int i = 0; i < h * w; ++i, p += dy.c) {
      for (int c = 0; c < dy.c; ++c) p[c] = g[c] * inv;
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight.name = name + ".weight";
  weight.resize(static_cast<std::size_t>(in_) * out_);
  bias.name = name + ".bias";
  bias.resize(out_);
}

void Linear::init_default(std::mt19937_64& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& v : weight.value) v = dist(rng);
  for (float& v : bias.value) v = dist(rng);
}

void Linear::visit(const ParamVisitor& fn) {
  fn(weight);
  fn(bias);
}

Tensor Linear::infer(const Tensor& x) const {
  const int features = x.h * x.w * x.c;
  require(features == in_, weight.name + ": expected " + std::to_string(in_) + " features, got " + x.shape_string());
  Tensor y(x.n, 1, 1, out_);
  for (int n = 0; n < x.n; ++n) std::copy(bias.value.begin(), bias.value.end(), y.ptr() + static_cast<std::size_t>(n) * out_);
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, x.n, out_, in_, 1.0f, x.ptr(), in_, weight.value.data(), in_,
              1.0f, y.ptr(), out_);
  return y;
}

Tensor Linear::forward(const Tensor& x) {
  saved_input_ = x;
  return infer(x);
}

Tensor Linear::backward(const Tensor& dy) {
  const Tensor& x = saved_input_;
  require(dy.n == x.n && dy.h * dy.w * dy.c == out_, weight.name + ": gradient shape mismatch");
  if (weight.trainable) {
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, out_, in_, x.n, 1.0f, dy.ptr(), out_, x.ptr(), in_, 1.0f,
                weight.grad.data(), in_);
  }
  if (bias.trainable) {
    for (int n = 0; n < dy.n; ++n) {
      for (int o = 0; o < out_; ++o) bias.grad[o] += dy.data[static_cast<std::size_t>(n) * out_ + o];
    }
  }
  Tensor dx(x.n, x.h, x.w, x.c);
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, x.n, in_, out_, 1.0f, dy.ptr(), out_, weight.value.data(),
              in_, 0.0f, dx.ptr(), in_);
  return dx;
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(Tensor x, std::mt19937_64& rng) {
  scale_.assign(x.size(), 1.0f);
  if (p_ <= 0.0f) return x;
  std::bernoulli_distribution keep(1.0 - p_);
  const float s = 1.0f / (1.0f - p_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale_[i] = keep(rng) ? s : 0.0f;
    x.data[i] *= scale_[i];
  }
  return x;
}

Tensor Dropout::backward(Tensor dy) const {
  require(dy.size() == scale_.size(), "dropout: gradient shape mismatch");
  for (std::size_t i = 0; i < dy.size(); ++i) dy.data[i] *= scale_[i];
  return dy;
}

// ---------------------------------------------------------------- loss

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
  const int K = logits.h * logits.w * logits.c;
  std::vector<std::vector<double>> out(logits.n, std::vector<double>(K));
  for (int n = 0; n < logits.n; ++n) {
    const float* z = logits.ptr() + static_cast<std::size_t>(n) * K;
    double mx = z[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(z[k]));
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += out[n][k] = std::exp(z[k] - mx);
    for (int k = 0; k < K; ++k) out[n][k] /= sum;
  }
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<double>& class_weights) {
  const int K = logits.h * logits.w * logits.c;
  require(static_cast<int>(targets.size()) == logits.n, "cross-entropy: target count does not match batch");
  require(class_weights.empty() || static_cast<int>(class_weights.size()) == K,
          "cross-entropy: class weight count does not match logits");
  const auto probs = softmax_rows(logits);
  double weight_sum = 0.0;
  for (int n = 0; n < logits.n; ++n) {
    require(targets[n] >= 0 && targets[n] < K, "cross-entropy: target out of range");
    weight_sum += class_weights.empty() ? 1.0 : class_weights[targets[n]];
  }
  LossResult r;
  r.grad = Tensor(logits.n, logits.h, logits.w, logits.c);
  for (int n = 0; n < logits.n; ++n) {
    const double w = (class_weights.empty() ? 1.0 : class_weights[targets[n]]) / weight_sum;
    const float* z = logits.ptr() + static_cast<std::size_t>(n) * K;
    double mx = z[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(z[k]));
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(z[k] - mx);
    r.loss -= w * (z[targets[n]] - mx - std::log(sum));
    for (int k = 0; k < K; ++k) {
      const double g = w * (probs[n][k] - (k == targets[n] ? 1.0 : 0.0));
      r.grad.data[static_cast<std::size_t>(n) * K + k] = static_cast<float>(g);
    }
  }
  return r;
}

}  // namespace dsaqc::nn
