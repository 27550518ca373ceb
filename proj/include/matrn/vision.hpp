#pragma once

#include <cmath>

#include "matrn/config.hpp"
#include "matrn/nn.hpp"

namespace matrn {

/// Parameter-free 2-D sinusoidal embedding, flattened row-major to [h*w, d].
/// Half the channels encode the row index, half the column index.
template <class T>
Tensor<T> sinusoidal_2d_pe(int h, int w, int d) {
  if (d % 4 != 0)
    throw ConfigError("sinusoidal_2d_pe: d = " + std::to_string(d) + " not divisible by 4");
  Tensor<T> pe = Tensor<T>::zeros({h * w, d});
  const int quarter = d / 4;
  T* p = pe.ptr();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      T* row = p + static_cast<int64_t>(r * w + c) * d;
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / quarter);
        row[2 * i] = static_cast<T>(std::sin(r * freq));
        row[2 * i + 1] = static_cast<T>(std::cos(r * freq));
        row[d / 2 + 2 * i] = static_cast<T>(std::sin(c * freq));
        row[d / 2 + 2 * i + 1] = static_cast<T>(std::cos(c * freq));
      }
    }
  }
  return pe;
}

/// Standard 1-D sinusoidal embedding, [t, d].
template <class T>
Tensor<T> sinusoidal_1d_pe(int t, int d) {
  if (d % 2 != 0) throw ConfigError("sinusoidal_1d_pe: d must be even");
  Tensor<T> pe = Tensor<T>::zeros({t, d});
  T* p = pe.ptr();
  for (int pos = 0; pos < t; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / d);
      p[static_cast<int64_t>(pos) * d + 2 * i] = static_cast<T>(std::sin(pos * freq));
      p[static_cast<int64_t>(pos) * d + 2 * i + 1] = static_cast<T>(std::cos(pos * freq));
    }
  }
  return pe;
}

/// Residual conv block with a post-block channel layer norm.
template <class T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2, skip;
  LayerNorm<T> norm;
  bool has_skip = false;
  int out_ch = 0;

  ResidualBlock() = default;
  ResidualBlock(ParamRegistry<T>& reg, const std::string& name, int in_ch, int out_ch_, int stride,
                std::mt19937& rng)
      : out_ch(out_ch_) {
    conv1 = Conv2d<T>(reg, name + ".conv1", in_ch, out_ch_, 3, stride, 1, rng);
    conv2 = Conv2d<T>(reg, name + ".conv2", out_ch_, out_ch_, 3, 1, 1, rng);
    has_skip = (stride != 1 || in_ch != out_ch_);
    if (has_skip) skip = Conv2d<T>(reg, name + ".skip", in_ch, out_ch_, 1, stride, 0, rng);
    norm = LayerNorm<T>(reg, name + ".norm", out_ch_);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> h = conv2(relu(conv1(x)));
    Tensor<T> res = has_skip ? skip(x) : x;
    Tensor<T> y = relu(add(h, res));
    // layer norm over channels: BCHW -> BHWC -> norm -> BCHW
    const int B = y.dim(0), C = y.dim(1), H = y.dim(2), W = y.dim(3);
    Tensor<T> t = permute(y, {0, 2, 3, 1});
    t = norm(t);
    return permute(reshape(t, {B, H, W, C}), {0, 3, 1, 2});
  }
};

/// Conv stem + 4 residual blocks with two stride-2 stages: exact 4x
/// downsampling to D channels.
template <class T>
struct ConvBackbone {
  Conv2d<T> stem;
  std::vector<ResidualBlock<T>> blocks;

  ConvBackbone() = default;
  ConvBackbone(ParamRegistry<T>& reg, const std::string& name, const TrainConfig& cfg,
               std::mt19937& rng) {
    const auto& w = cfg.backbone_widths;
    if (w.back() != cfg.d_model)
      throw ConfigError("backbone_widths must end at d_model, got " + std::to_string(w.back()));
    stem = Conv2d<T>(reg, name + ".stem", cfg.img_c, w[0], 3, 1, 1, rng);
    blocks.emplace_back(reg, name + ".block1", w[0], w[0], 1, rng);
    blocks.emplace_back(reg, name + ".block2", w[0], w[1], 2, rng);
    blocks.emplace_back(reg, name + ".block3", w[1], w[2], 2, rng);
    blocks.emplace_back(reg, name + ".block4", w[2], w[3], 1, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> h = relu(stem(x));
    for (const auto& b : blocks) h = b(h);
    return h;  // [B, D, H/4, W/4]
  }
};

/// Backbone features + P^V + Transformer unit over the flattened sequence.
template <class T>
struct VisionEncoder {
  ConvBackbone<T> backbone;
  std::vector<TransformerBlock<T>> tx;
  Tensor<T> pe_flat;  // [N, D], constant
  int h4 = 0, w4 = 0, d = 0;
  bool skip_transformer = false;  // debug: encode == backbone + P^V
  bool use_pe = true;             // sensitivity probes only

  VisionEncoder() = default;
  VisionEncoder(ParamRegistry<T>& reg, const std::string& name, const TrainConfig& cfg,
                std::mt19937& rng) {
    if (cfg.img_h % 4 != 0 || cfg.img_w % 4 != 0)
      throw ConfigError("image dims must be divisible by 4");
    h4 = cfg.img_h / 4;
    w4 = cfg.img_w / 4;
    d = cfg.d_model;
    backbone = ConvBackbone<T>(reg, name + ".backbone", cfg, rng);
    pe_flat = sinusoidal_2d_pe<T>(h4, w4, d);
    for (int i = 0; i < cfg.vision_blocks; ++i)
      tx.emplace_back(reg, name + ".tx" + std::to_string(i), d, cfg.heads, cfg.ffn_mult, false,
                      rng);
  }

  /// [B, N, D] conv features before the position embedding.
  Tensor<T> conv_features(const Tensor<T>& x) const {
    Tensor<T> f = backbone(x);  // [B, D, h4, w4]
    const int B = f.dim(0);
    return reshape(permute(f, {0, 2, 3, 1}), {B, h4 * w4, d});
  }

  /// Flattened visual features V-tilde: [B, N, D].
  Tensor<T> operator()(const Tensor<T>& x) {
    Tensor<T> v = conv_features(x);
    if (use_pe) v = add_broadcast0(v, pe_flat);
    if (!skip_transformer)
      for (auto& b : tx) v = b(v);
    return v;
  }
};

}  // namespace matrn
