#pragma once

#include <cmath>
#include <vector>

#include "matrn/tensor.hpp"

namespace matrn {

/// Adam with bias correction. One state slot per parameter, matched by order.
template <class T>
class Adam {
 public:
  Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }

  void step(std::vector<Tensor<T>>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(static_cast<size_t>(params[i].size()), T(0));
        v_[i].assign(static_cast<size_t>(params[i].size()), T(0));
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, T(t_));
    const T bc2 = T(1) - std::pow(beta2_, T(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = params[i];
      if (!p.tracked()) continue;
      T* w = p.ptr();
      const T* g = p.gptr();
      T* m = m_[i].data();
      T* v = v_[i].data();
      const int64_t n = p.size();
      for (int64_t j = 0; j < n; ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad(std::vector<Tensor<T>>& params) {
    for (auto& p : params) p.zero_grad();
  }

 private:
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace matrn
