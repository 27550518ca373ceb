#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "matrn/ops.hpp"
#include "matrn/tensor.hpp"

namespace matrn {

/// Flat, ordered collection of named trainable tensors. Modules register their
/// parameters here at construction; the optimizer and checkpoints iterate it.
template <class T>
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  Tensor<T> add(const std::string& name, Tensor<T> t) {
    t.ensure_grad();
    items.emplace_back(name, t);
    return t;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& [name, t] : items) n += t.size();
    return n;
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(items.size());
    for (const auto& [name, t] : items) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : items) t.zero_grad();
  }
};

template <class T>
Tensor<T> normal_init(const Shape& s, T std_dev, std::mt19937& rng) {
  Tensor<T> t = Tensor<T>::zeros(s);
  std::normal_distribution<double> dist(0.0, static_cast<double>(std_dev));
  for (auto& v : *t.data) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Tensor<T> trunc_normal_init(const Shape& s, T std_dev, std::mt19937& rng) {
  Tensor<T> t = Tensor<T>::zeros(s);
  std::normal_distribution<double> dist(0.0, static_cast<double>(std_dev));
  for (auto& v : *t.data) {
    double z;
    do {
      z = dist(rng);
    } while (std::abs(z) > 2.0 * static_cast<double>(std_dev));
    v = static_cast<T>(z);
  }
  return t;
}

template <class T>
struct Linear {
  Tensor<T> w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, int in, int out, std::mt19937& rng,
         bool bias = true)
      : has_bias(bias) {
    w = reg.add(name + ".w", normal_init<T>({in, out}, std::sqrt(T(1) / T(in)), rng));
    if (bias) b = reg.add(name + ".b", Tensor<T>::zeros({out}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> y = matmul_folded(x, w);
    return has_bias ? add_bias(y, b) : y;
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gamma, beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  LayerNorm(ParamRegistry<T>& reg, const std::string& name, int dim) {
    gamma = reg.add(name + ".gamma", Tensor<T>::full({dim}, T(1)));
    beta = reg.add(name + ".beta", Tensor<T>::zeros({dim}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
};

template <class T>
struct Conv2d {
  Tensor<T> w, b;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(ParamRegistry<T>& reg, const std::string& name, int in_ch, int out_ch, int k, int stride_,
         int pad_, std::mt19937& rng)
      : stride(stride_), pad(pad_) {
    const T std_dev = std::sqrt(T(2) / T(in_ch * k * k));
    w = reg.add(name + ".w", normal_init<T>({out_ch, in_ch, k, k}, std_dev, rng));
    b = reg.add(name + ".b", Tensor<T>::zeros({out_ch}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

/// Multi-head attention over [B, L, D] sequences. An additive mask of shape
/// [Lq, Lk] is broadcast across batch and heads. When capture_attn is set, the
/// post-softmax weights of the last call are kept (detached) for inspection.
template <class T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1, dim = 0;
  bool capture_attn = false;
  Tensor<T> last_attn;  // [B*heads, Lq, Lk]

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamRegistry<T>& reg, const std::string& name, int d, int h,
                     std::mt19937& rng)
      : heads(h), dim(d) {
    if (d % h != 0) throw ConfigError("attention dim " + std::to_string(d) + " not divisible by " +
                                      std::to_string(h) + " heads");
    wq = Linear<T>(reg, name + ".wq", d, d, rng);
    wk = Linear<T>(reg, name + ".wk", d, d, rng);
    wv = Linear<T>(reg, name + ".wv", d, d, rng);
    wo = Linear<T>(reg, name + ".wo", d, d, rng);
  }

  Tensor<T> split_heads(const Tensor<T>& x) const {
    const int B = x.dim(0), L = x.dim(1);
    const int dh = dim / heads;
    Tensor<T> r = reshape(x, {B, L, heads, dh});
    Tensor<T> p = permute(r, {0, 2, 1, 3});
    return reshape(p, {B * heads, L, dh});
  }

  Tensor<T> operator()(const Tensor<T>& q_in, const Tensor<T>& kv_in,
                       const Tensor<T>* mask = nullptr) {
    const int B = q_in.dim(0), Lq = q_in.dim(1), Lk = kv_in.dim(1);
    const int dh = dim / heads;
    Tensor<T> q = split_heads(wq(q_in));
    Tensor<T> k = split_heads(wk(kv_in));
    Tensor<T> v = split_heads(wv(kv_in));
    Tensor<T> logits = scale(bmm(q, k, false, true), T(1) / std::sqrt(T(dh)));
    if (mask) logits = add_broadcast0(logits, *mask);
    Tensor<T> attn = softmax(logits, -1);
    if (capture_attn) last_attn = detach(attn);
    Tensor<T> ctx = bmm(attn, v);
    Tensor<T> merged = reshape(permute(reshape(ctx, {B, heads, Lq, dh}), {0, 2, 1, 3}), {B, Lq, dim});
    return wo(merged);
  }
};

template <class T>
struct FeedForward {
  Linear<T> fc1, fc2;

  FeedForward() = default;
  FeedForward(ParamRegistry<T>& reg, const std::string& name, int d, int hidden, std::mt19937& rng) {
    fc1 = Linear<T>(reg, name + ".fc1", d, hidden, rng);
    fc2 = Linear<T>(reg, name + ".fc2", hidden, d, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(gelu(fc1(x))); }
};

/// Pre-norm Transformer block. Self-attention when kv == nullptr, otherwise
/// cross-attention against the given key/value sequence.
template <class T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln_kv, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  bool cross = false;

  TransformerBlock() = default;
  TransformerBlock(ParamRegistry<T>& reg, const std::string& name, int d, int h, int ffn_mult,
                   bool cross_attention, std::mt19937& rng)
      : cross(cross_attention) {
    ln1 = LayerNorm<T>(reg, name + ".ln1", d);
    if (cross) ln_kv = LayerNorm<T>(reg, name + ".ln_kv", d);
    ln2 = LayerNorm<T>(reg, name + ".ln2", d);
    attn = MultiHeadAttention<T>(reg, name + ".attn", d, h, rng);
    ffn = FeedForward<T>(reg, name + ".ffn", d, d * ffn_mult, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>* kv = nullptr,
                       const Tensor<T>* mask = nullptr) {
    Tensor<T> qn = ln1(x);
    Tensor<T> kvn = cross && kv ? ln_kv(*kv) : qn;
    Tensor<T> h = add(x, attn(qn, cross && kv ? kvn : qn, mask));
    return add(h, ffn(ln2(h)));
  }
};

/// -inf additive mask that forbids position i from attending to key i.
template <class T>
Tensor<T> diagonal_attention_mask(int t) {
  if (t < 1) throw ConfigError("diagonal_attention_mask: T must be >= 1");
  Tensor<T> m = Tensor<T>::zeros({t, t});
  for (int i = 0; i < t; ++i)
    (*m.data)[static_cast<size_t>(i * t + i)] = -std::numeric_limits<T>::infinity();
  return m;
}

}  // namespace matrn
