#include "dsaqc/nn/tensor.hpp"

#include <algorithm>

#include "dsaqc/errors.hpp"

namespace dsaqc::nn {

std::string Tensor::shape_string() const {
  return "[" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(c) + "]";
}

Tensor Tensor::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > n) throw ValidationError("tensor slice out of range");
  Tensor out(count, h, w, c);
  const std::size_t per = static_cast<std::size_t>(h) * w * c;
  std::copy_n(data.begin() + per * first, per * count, out.data.begin());
  return out;
}

Tensor concat_batch(std::span<const Tensor* const> parts) {
  if (parts.empty()) return {};
  const Tensor& f = *parts.front();
  int total = 0;
  for (const Tensor* t : parts) {
    if (t->h != f.h || t->w != f.w || t->c != f.c) throw ValidationError("concat_batch: shape mismatch");
    total += t->n;
  }
  Tensor out(total, f.h, f.w, f.c);
  auto it = out.data.begin();
  for (const Tensor* t : parts) it = std::copy(t->data.begin(), t->data.end(), it);
  return out;
}

}  // namespace dsaqc::nn
