#pragma once

#include "matrn/charset.hpp"
#include "matrn/config.hpp"
#include "matrn/nn.hpp"

namespace matrn {

/// Parallel bidirectional Transformer-decoder language model: maps a soft
/// character distribution sequence Y to semantic features S. Queries are the
/// text positional embeddings; keys/values are a linear embedding of Y.
/// Gradients are blocked at the input boundary.
template <class T>
struct LanguageModel {
  Linear<T> embed;
  Tensor<T> ps;  // [T, D]
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> out_norm;
  Tensor<T> diag_mask;
  bool use_diag_mask = true;
  int t_max = 0, d = 0;

  LanguageModel() = default;
  LanguageModel(ParamRegistry<T>& reg, const std::string& name, const TrainConfig& cfg,
                std::mt19937& rng, const Tensor<T>* shared_ps = nullptr)
      : use_diag_mask(cfg.lm_diag_mask), t_max(cfg.t_max), d(cfg.d_model) {
    embed = Linear<T>(reg, name + ".embed", Charset::kNumClasses, d, rng);
    if (shared_ps)
      ps = *shared_ps;
    else
      ps = reg.add(name + ".ps", trunc_normal_init<T>({cfg.t_max, d}, T(0.02), rng));
    for (int i = 0; i < cfg.lm_blocks; ++i)
      blocks.emplace_back(reg, name + ".block" + std::to_string(i), d, cfg.heads, cfg.ffn_mult,
                          true, rng);
    out_norm = LayerNorm<T>(reg, name + ".out_norm", d);
    diag_mask = diagonal_attention_mask<T>(cfg.t_max);
  }

  /// y: [B, T, C] row-stochastic. Returns S: [B, T, D].
  Tensor<T> operator()(const Tensor<T>& y_in) {
    if (y_in.ndim() != 3 || y_in.dim(1) != t_max || y_in.dim(2) != Charset::kNumClasses)
      throw DimensionError("lm: expected [B," + std::to_string(t_max) + "," +
                           std::to_string(Charset::kNumClasses) + "], got " +
                           shape_str(y_in.shape));
    validate_stochastic(y_in);
    Tensor<T> y = detach(y_in);  // stop-gradient at the LM boundary
    Tensor<T> kv = add_broadcast0(embed(y), ps);
    const int B = y.dim(0);
    Tensor<T> x = add_broadcast0(Tensor<T>::zeros({B, t_max, d}), ps);
    const Tensor<T>* mask = use_diag_mask ? &diag_mask : nullptr;
    for (auto& b : blocks) x = b(x, &kv, mask);
    return out_norm(x);
  }

  static void validate_stochastic(const Tensor<T>& y) {
    const int C = y.dim(-1);
    const int64_t rows = y.size() / C;
    const T* p = y.ptr();
    for (int64_t r = 0; r < rows; ++r) {
      T s = T(0);
      for (int c = 0; c < C; ++c) s += p[r * C + c];
      if (std::abs(static_cast<double>(s) - 1.0) > 1e-3)
        throw InputError("lm: input row " + std::to_string(r) + " sums to " +
                         std::to_string(static_cast<double>(s)) + ", expected 1");
    }
  }
};

}  // namespace matrn
