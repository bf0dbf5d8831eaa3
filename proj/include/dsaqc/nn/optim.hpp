#pragma once

#include <vector>

#include "dsaqc/nn/tensor.hpp"

namespace dsaqc::nn {

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay (p <- p - lr * wd * p before the moment update).
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);
  void step();
  void zero_grad();
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamWOptions opt_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace dsaqc::nn
