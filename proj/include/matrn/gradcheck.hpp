#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "matrn/ops.hpp"

namespace matrn {

/// Central-difference check of the tape gradient for one scalar-valued graph.
/// Returns the worst relative error across all input elements, measured
/// against the largest gradient magnitude (floored at 1e-3).
template <class T>
double finite_difference_error(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
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
    for (const T& g : *t.grad) gmax = std::max(gmax, std::abs(static_cast<double>(g)));
    const double denom = std::max(gmax, 1e-3);
    for (size_t i = 0; i < t.data->size(); ++i) {
      const T orig = (*t.data)[i];
      (*t.data)[i] = orig + step;
      const double fp = static_cast<double>(f(inputs).item());
      (*t.data)[i] = orig - step;
      const double fm = static_cast<double>(f(inputs).item());
      (*t.data)[i] = orig;
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(step));
      worst = std::max(worst, std::abs(numeric - static_cast<double>((*t.grad)[i])) / denom);
    }
  }
  return worst;
}

/// Per-op finite-difference suite over all differentiable primitives plus
/// composed graphs; `seeds` random draws per op, worst error reported.
template <class T>
std::vector<std::pair<std::string, double>> gradient_check_suite(int seeds, T step) {
  using V = std::vector<Tensor<T>>;
  std::vector<std::pair<std::string, double>> results;

  auto rand_t = [](const Shape& s, std::mt19937& rng) {
    Tensor<T> t = Tensor<T>::zeros(s);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : *t.data) v = static_cast<T>(dist(rng));
    return t;
  };

  auto run = [&](const std::string& name,
                 const std::function<Tensor<T>(const V&)>& f,
                 const std::function<V(std::mt19937&)>& gen) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      std::mt19937 rng(static_cast<uint32_t>(1000 + s));
      worst = std::max(worst, finite_difference_error<T>(f, gen(rng), step));
    }
    results.emplace_back(name, worst);
  };

  // relu inputs are kept away from the kink at 0, where central differences
  // straddle the non-differentiable point
  auto rand_away = [](const Shape& s, std::mt19937& rng) {
    Tensor<T> t = Tensor<T>::zeros(s);
    std::uniform_real_distribution<double> mag(0.3, 1.0);
    for (auto& v : *t.data)
      v = static_cast<T>(mag(rng) * ((rng() & 1) ? 1.0 : -1.0));
    return t;
  };

  auto sq = [](const Tensor<T>& x) { return sum_all(mul(x, x)); };

  run("relu", [&](const V& in) { return sum_all(mul(relu(in[0]), in[1])); },
      [&](std::mt19937& r) { return V{rand_away({3, 4}, r), rand_t({3, 4}, r)}; });
  run("sigmoid", [&](const V& in) { return sum_all(mul(sigmoid(in[0]), in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({3, 4}, r)}; });
  run("gelu", [&](const V& in) { return sum_all(mul(gelu(in[0]), in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({3, 4}, r)}; });
  run("add", [&](const V& in) { return sq(add(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({3, 4}, r)}; });
  run("sub", [&](const V& in) { return sq(sub(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({3, 4}, r)}; });
  run("mul", [&](const V& in) { return sq(mul(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({3, 4}, r)}; });
  run("scale", [&](const V& in) { return sq(scale(in[0], T(0.7))); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r)}; });
  run("add_bias", [&](const V& in) { return sq(add_bias(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({4}, r)}; });
  run("add_broadcast0", [&](const V& in) { return sq(add_broadcast0(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({2, 3, 4}, r), rand_t({3, 4}, r)}; });
  run("matmul", [&](const V& in) { return sq(matmul(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({4, 5}, r)}; });
  run("matmul_folded", [&](const V& in) { return sq(matmul_folded(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({2, 3, 4}, r), rand_t({4, 5}, r)}; });
  run("bmm", [&](const V& in) { return sq(bmm(in[0], in[1])); },
      [&](std::mt19937& r) { return V{rand_t({2, 3, 4}, r), rand_t({2, 4, 5}, r)}; });
  run("bmm_tb", [&](const V& in) { return sq(bmm(in[0], in[1], false, true)); },
      [&](std::mt19937& r) { return V{rand_t({2, 3, 4}, r), rand_t({2, 5, 4}, r)}; });
  run("bmm_broadcast", [&](const V& in) { return sq(bmm(in[0], in[1], false, true)); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({2, 5, 4}, r)}; });
  run("softmax", [&](const V& in) { return sum_all(mul(softmax(in[0], -1), in[1])); },
      [&](std::mt19937& r) { return V{rand_t({3, 5}, r), rand_t({3, 5}, r)}; });
  run("layer_norm", [&](const V& in) { return sq(layer_norm(in[0], in[1], in[2], T(1e-5))); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r), rand_t({4}, r), rand_t({4}, r)}; });
  run("conv2d", [&](const V& in) { return sq(conv2d(in[0], in[1], in[2], 1, 1)); },
      [&](std::mt19937& r) {
        return V{rand_t({1, 2, 4, 4}, r), rand_t({3, 2, 3, 3}, r), rand_t({3}, r)};
      });
  run("conv2d_s2", [&](const V& in) { return sq(conv2d(in[0], in[1], in[2], 2, 1)); },
      [&](std::mt19937& r) {
        return V{rand_t({1, 2, 4, 4}, r), rand_t({3, 2, 3, 3}, r), rand_t({3}, r)};
      });
  run("upsample2x", [&](const V& in) { return sq(upsample_nearest2x(in[0])); },
      [&](std::mt19937& r) { return V{rand_t({1, 2, 2, 3}, r)}; });
  run("concat", [&](const V& in) { return sq(concat<T>({in[0], in[1]}, -1)); },
      [&](std::mt19937& r) { return V{rand_t({2, 3}, r), rand_t({2, 4}, r)}; });
  run("slice", [&](const V& in) { return sq(slice(in[0], 1, 2, 3)); },
      [&](std::mt19937& r) { return V{rand_t({2, 6, 3}, r)}; });
  run("permute", [&](const V& in) { return sq(permute(in[0], {0, 2, 1})); },
      [&](std::mt19937& r) { return V{rand_t({2, 3, 4}, r)}; });
  run("cross_entropy",
      [&](const V& in) { return cross_entropy(in[0], std::vector<int>{1, 0, 2}); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r)}; });
  run("mean_all", [&](const V& in) { return mean_all(mul(in[0], in[0])); },
      [&](std::mt19937& r) { return V{rand_t({3, 4}, r)}; });

  // composed graphs
  run("composed_attention",
      [&](const V& in) {
        auto a = softmax(scale(bmm(in[0], in[1], false, true), T(0.5)), -1);
        return sq(bmm(a, in[1]));
      },
      [&](std::mt19937& r) { return V{rand_t({1, 3, 4}, r), rand_t({1, 5, 4}, r)}; });
  run("composed_mlp_norm",
      [&](const V& in) {
        auto h = gelu(matmul(in[0], in[1]));
        return sq(layer_norm(h, in[2], in[3], T(1e-5)));
      },
      [&](std::mt19937& r) {
        return V{rand_t({3, 4}, r), rand_t({4, 4}, r), rand_t({4}, r), rand_t({4}, r)};
      });
  run("composed_gate",
      [&](const V& in) {
        auto g = sigmoid(matmul_folded(concat<T>({in[0], in[1]}, -1), in[2]));
        return sq(add(in[1], mul(g, sub(in[0], in[1]))));
      },
      [&](std::mt19937& r) {
        return V{rand_t({1, 3, 4}, r), rand_t({1, 3, 4}, r), rand_t({8, 4}, r)};
      });

  return results;
}

}  // namespace matrn
