#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "matrn/ops.hpp"

namespace matrn::testing {

template <class T>
Tensor<T> random_tensor(const Shape& s, std::mt19937& rng, T lo = T(-1), T hi = T(1)) {
  Tensor<T> t = Tensor<T>::zeros(s);
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : *t.data) v = static_cast<T>(dist(rng));
  return t;
}

/// Central finite differences against the tape gradient. Returns the maximum
/// relative error across all inputs, where relative error is measured against
/// the largest gradient magnitude of the tensor (with a small floor).
template <class T>
double gradient_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
                      std::vector<Tensor<T>> inputs, T step) {
  for (auto& t : inputs) t.ensure_grad();
  {
    Tape<T> tape;
    Tensor<T> loss = f(inputs);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    double gmax = 0.0;
    for (int64_t i = 0; i < t.size(); ++i)
      gmax = std::max(gmax, std::abs(static_cast<double>((*t.grad)[static_cast<size_t>(i)])));
    const double denom = std::max(gmax, 1e-3);
    for (int64_t i = 0; i < t.size(); ++i) {
      const T orig = (*t.data)[static_cast<size_t>(i)];
      (*t.data)[static_cast<size_t>(i)] = orig + step;
      const double fp = static_cast<double>(f(inputs).item());
      (*t.data)[static_cast<size_t>(i)] = orig - step;
      const double fm = static_cast<double>(f(inputs).item());
      (*t.data)[static_cast<size_t>(i)] = orig;
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(step));
      const double analytic = static_cast<double>((*t.grad)[static_cast<size_t>(i)]);
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace matrn::testing
