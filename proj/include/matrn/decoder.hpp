#pragma once

#include "matrn/charset.hpp"
#include "matrn/config.hpp"
#include "matrn/nn.hpp"

namespace matrn {

/// One-level encoder-decoder over the visual feature map: stride-2 conv,
/// bottleneck conv, nearest upsample, skip concat, 1x1 fuse.
template <class T>
struct MiniUNet {
  Conv2d<T> down, bottleneck, fuse;
  int d = 0, d_inner = 0;
  bool zero_skip = false;  // ablation probe

  MiniUNet() = default;
  MiniUNet(ParamRegistry<T>& reg, const std::string& name, int d_, std::mt19937& rng) : d(d_) {
    d_inner = std::max(8, d_ / 4);
    down = Conv2d<T>(reg, name + ".down", d_, d_inner, 3, 2, 1, rng);
    bottleneck = Conv2d<T>(reg, name + ".bottleneck", d_inner, d_inner, 3, 1, 1, rng);
    fuse = Conv2d<T>(reg, name + ".fuse", d_ + d_inner, d_, 1, 1, 0, rng);
  }

  /// v_flat: [B, N, D] with N = h4*w4; returns keys of the same shape.
  Tensor<T> operator()(const Tensor<T>& v_flat, int h4, int w4) const {
    if (h4 % 2 != 0 || w4 % 2 != 0)
      throw ConfigError("mini U-Net needs even feature map dims, got " + std::to_string(h4) + "x" +
                        std::to_string(w4));
    const int B = v_flat.dim(0);
    Tensor<T> x = permute(reshape(v_flat, {B, h4, w4, d}), {0, 3, 1, 2});  // BCHW
    Tensor<T> enc = relu(down(x));
    Tensor<T> mid = relu(bottleneck(enc));
    Tensor<T> up = upsample_nearest2x(mid);
    Tensor<T> skip_in = zero_skip ? scale(x, T(0)) : x;
    Tensor<T> cat = concat<T>({skip_in, up}, 1);
    Tensor<T> out = fuse(cat);
    return reshape(permute(out, {0, 2, 3, 1}), {B, h4 * w4, d});
  }
};

template <class T>
struct AttentionResult {
  Tensor<T> attn;      // [B, T, N], row-stochastic over N
  Tensor<T> features;  // [B, T, D]
  Tensor<T> logits;    // [B, T, C]
};

/// Transcribes visual features into a character sequence: mini U-Net keys,
/// positional-query attention map, aggregation, linear classification.
/// Used both as the seed text generator and (with independent weights) as the
/// character generator over multi-modal visual features.
template <class T>
struct AttentionGenerator {
  MiniUNet<T> unet;
  Tensor<T> ps;     // [T, D]; may be shared with the LM
  Tensor<T> w_cls;  // [D, C]
  int d = 0, t_max = 0;

  AttentionGenerator() = default;
  AttentionGenerator(ParamRegistry<T>& reg, const std::string& name, const TrainConfig& cfg,
                     std::mt19937& rng, const Tensor<T>* shared_ps = nullptr)
      : d(cfg.d_model), t_max(cfg.t_max) {
    unet = MiniUNet<T>(reg, name + ".unet", d, rng);
    if (shared_ps)
      ps = *shared_ps;
    else
      ps = reg.add(name + ".ps", trunc_normal_init<T>({cfg.t_max, d}, T(0.02), rng));
    w_cls = reg.add(name + ".w_cls",
                    normal_init<T>({d, Charset::kNumClasses}, std::sqrt(T(1) / T(d)), rng));
  }

  AttentionResult<T> operator()(const Tensor<T>& v_flat, int h4, int w4) const {
    Tensor<T> keys = unet(v_flat, h4, w4);
    Tensor<T> logits_att = scale(bmm(ps, keys, false, true), T(1) / std::sqrt(T(d)));
    AttentionResult<T> r;
    r.attn = softmax(logits_att, -1);
    r.features = bmm(r.attn, v_flat);
    r.logits = matmul_folded(r.features, w_cls);
    return r;
  }
};

/// Greedy per-position decode; the word ends at the first pad prediction.
template <class T>
std::vector<std::string> greedy_decode(const Tensor<T>& logits /* [B, T, C] */) {
  const int B = logits.dim(0), t_len = logits.dim(1), C = logits.dim(2);
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(B));
  const T* p = logits.ptr();
  for (int b = 0; b < B; ++b) {
    std::vector<int> idx;
    for (int t = 0; t < t_len; ++t) {
      const T* row = p + (static_cast<int64_t>(b) * t_len + t) * C;
      int best = 0;
      for (int c = 1; c < C; ++c)
        if (row[c] > row[best]) best = c;
      idx.push_back(best);
    }
    out.push_back(decode_indices(idx));
  }
  return out;
}

}  // namespace matrn
