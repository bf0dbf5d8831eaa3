#include "dsaqc/nn/optim.hpp"

#include <cmath>

#include "dsaqc/errors.hpp"

namespace dsaqc::nn {

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
  if (!(opt_.learning_rate > 0)) throw ValidationError("learning rate must be positive");
  if (opt_.weight_decay < 0) throw ValidationError("weight decay must be non-negative");
  for (Parameter* p : params_) {
    if (p->grad.size() != p->value.size()) throw ValidationError("parameter " + p->name + " has no gradient buffer");
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const auto decay = static_cast<float>(1.0 - opt_.learning_rate * opt_.weight_decay);
  const auto b1 = static_cast<float>(opt_.beta1), b2 = static_cast<float>(opt_.beta2);
  const auto step_size = static_cast<float>(opt_.learning_rate / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(opt_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value;
    const auto& grad = params_[k]->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      value[i] *= decay;
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace dsaqc::nn
