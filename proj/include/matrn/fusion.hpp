#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <random>

#include "matrn/config.hpp"
#include "matrn/nn.hpp"

namespace matrn {

/// Replaces selected rows of x[B, N, D] by a shared token[D]. Gradient flows
/// to the token for masked rows and to x elsewhere.
template <class T>
Tensor<T> mask_rows(const Tensor<T>& x, const std::vector<std::vector<int>>& rows,
                    const Tensor<T>& token) {
  if (x.ndim() != 3) throw DimensionError("mask_rows: need [B,N,D] input");
  const int B = x.dim(0), N = x.dim(1), D = x.dim(2);
  if (token.size() != D) throw DimensionError("mask_rows: token length mismatch");
  if (static_cast<int>(rows.size()) != B) throw DimensionError("mask_rows: rows per batch item");
  bool track = grad_enabled_for<T>({&x, &token});
  Tensor<T> out = make_output<T>(x.shape, track);
  std::memcpy(out.ptr(), x.ptr(), static_cast<size_t>(x.size()) * sizeof(T));
  const T* tp = token.ptr();
  for (int b = 0; b < B; ++b)
    for (int r : rows[static_cast<size_t>(b)]) {
      if (r < 0 || r >= N) throw DimensionError("mask_rows: row index out of range");
      std::memcpy(out.ptr() + (static_cast<int64_t>(b) * N + r) * D, tp,
                  static_cast<size_t>(D) * sizeof(T));
    }
  if (track) {
    record<T>([x, token, out, rows, B, N, D]() mutable {
      const T* og = out.gptr();
      std::vector<char> masked(static_cast<size_t>(B) * N, 0);
      for (int b = 0; b < B; ++b)
        for (int r : rows[static_cast<size_t>(b)]) masked[static_cast<size_t>(b) * N + r] = 1;
      if (x.tracked()) {
        T* xg = x.gptr();
        for (int64_t bn = 0; bn < static_cast<int64_t>(B) * N; ++bn)
          if (!masked[static_cast<size_t>(bn)])
            for (int d = 0; d < D; ++d) xg[bn * D + d] += og[bn * D + d];
      }
      if (token.tracked()) {
        T* tg = token.gptr();
        for (int64_t bn = 0; bn < static_cast<int64_t>(B) * N; ++bn)
          if (masked[static_cast<size_t>(bn)])
            for (int d = 0; d < D; ++d) tg[d] += og[bn * D + d];
      }
    });
  }
  return out;
}

/// Spatial encoding to semantics: S + A * P_v. Parameter-free.
template <class T>
Tensor<T> ses(const Tensor<T>& s, const Tensor<T>& attn, const Tensor<T>& pe_flat) {
  return add(s, bmm(attn, pe_flat));
}

struct MaskLogEntry {
  int position = -1;              // chosen character position
  std::vector<int> masked_rows;   // spatial indices replaced by the token
  bool kept = false;              // keep branch fired (no masking applied)
};

/// Top-K indices of an attention row, ties broken by lower spatial index.
template <class T>
std::vector<int> top_k_rows(const T* row, int n, int k) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return row[a] > row[b]; });
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Visual clue masking (training only): pick one character position per item,
/// mask the top-K visual rows of its attention; keep unchanged with
/// probability keep_prob.
template <class T>
Tensor<T> visual_clue_mask(const Tensor<T>& v_flat, const Tensor<T>& attn,
                           const std::vector<int>& true_lengths, int k, double keep_prob,
                           const Tensor<T>& token, std::mt19937& rng, bool training,
                           std::vector<MaskLogEntry>* log = nullptr) {
  if (!training) throw UsageError("visual_clue_mask called in eval mode");
  const int B = v_flat.dim(0), N = v_flat.dim(1);
  if (k < 1 || k > N) throw ConfigError("visual_clue_mask: K out of [1, N]");
  const T* ap = attn.ptr();
  const int t_len = attn.dim(1);
  std::vector<std::vector<int>> rows(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const int len = std::max(1, true_lengths[static_cast<size_t>(b)]);
    const int pos = static_cast<int>(rng() % static_cast<uint32_t>(len));
    const bool keep = ((rng() >> 8) * (1.0 / 16777216.0)) < keep_prob;
    MaskLogEntry e;
    e.position = pos;
    e.kept = keep;
    if (!keep) {
      e.masked_rows = top_k_rows(ap + (static_cast<int64_t>(b) * t_len + pos) * N, N, k);
      rows[static_cast<size_t>(b)] = e.masked_rows;
    }
    if (log) log->push_back(std::move(e));
  }
  return mask_rows(v_flat, rows, token);
}

/// Independent per-row masking with probability p (ablation baselines).
template <class T>
Tensor<T> random_feature_mask(const Tensor<T>& x, double p, const Tensor<T>& token,
                              std::mt19937& rng, bool training,
                              std::vector<std::vector<int>>* chosen = nullptr) {
  if (!training) throw UsageError("random_feature_mask called in eval mode");
  if (p < 0.0 || p > 1.0) throw ConfigError("random_feature_mask: p must be in [0,1]");
  const int B = x.dim(0), N = x.dim(1);
  std::vector<std::vector<int>> rows(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < N; ++r)
      if (((rng() >> 8) * (1.0 / 16777216.0)) < p) rows[static_cast<size_t>(b)].push_back(r);
  if (chosen) *chosen = rows;
  return mask_rows(x, rows, token);
}

/// Sigmoid-gated convex combination of the two aligned sequences (no bias).
template <class T>
Tensor<T> gated_fusion(const Tensor<T>& e_vm, const Tensor<T>& s_m, const Tensor<T>& w_gated) {
  if (e_vm.shape != s_m.shape)
    throw DimensionError("gated_fusion: operand shapes " + shape_str(e_vm.shape) + " vs " +
                         shape_str(s_m.shape));
  const int d = e_vm.dim(-1);
  if (w_gated.ndim() != 2 || w_gated.dim(0) != 2 * d || w_gated.dim(1) != d)
    throw DimensionError("gated_fusion: W must be [2D, D]");
  Tensor<T> g = sigmoid(matmul_folded(concat<T>({e_vm, s_m}, -1), w_gated));
  // F = G*E + (1-G)*S = S + G*(E-S)
  return add(s_m, mul(g, sub(e_vm, s_m)));
}

/// Multi-modal feature enhancement. Variant decides which modality queries
/// the other; the multi-modal variant runs joint self-attention over the
/// concatenated sequence and splits by position.
template <class T>
struct FeatureEnhancer {
  std::vector<TransformerBlock<T>> blocks;
  FeVariant variant = FeVariant::Multimodal;
  Tensor<T> type_visual, type_semantic;  // optional modality-type vectors
  bool modality_embed = false;
  bool capture_attn = false;

  FeatureEnhancer() = default;
  FeatureEnhancer(ParamRegistry<T>& reg, const std::string& name, const TrainConfig& cfg,
                  std::mt19937& rng)
      : variant(cfg.fe_variant), modality_embed(cfg.modality_embed) {
    const bool cross = variant == FeVariant::Semantic || variant == FeVariant::Visual;
    for (int i = 0; i < cfg.fe_blocks; ++i)
      blocks.emplace_back(reg, name + ".block" + std::to_string(i), cfg.d_model, cfg.heads,
                          cfg.ffn_mult, cross, rng);
    if (modality_embed) {
      type_visual = reg.add(name + ".type_v", trunc_normal_init<T>({cfg.d_model}, T(0.02), rng));
      type_semantic = reg.add(name + ".type_s", trunc_normal_init<T>({cfg.d_model}, T(0.02), rng));
    }
  }

  /// Returns {V^M, S^M}. joint_mask (optional, [N+T, N+T]) only applies to the
  /// multi-modal variant and exists for isolation probes.
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& v_flat, const Tensor<T>& s_align,
                                             const Tensor<T>* joint_mask = nullptr) {
    for (auto& b : blocks) b.attn.capture_attn = capture_attn;
    switch (variant) {
      case FeVariant::None:
        return {v_flat, s_align};
      case FeVariant::Semantic: {
        Tensor<T> s = s_align;
        for (auto& b : blocks) s = b(s, &v_flat);
        return {v_flat, s};
      }
      case FeVariant::Visual: {
        Tensor<T> v = v_flat;
        for (auto& b : blocks) v = b(v, &s_align);
        return {v, s_align};
      }
      case FeVariant::Multimodal: {
        Tensor<T> v = v_flat, s = s_align;
        if (modality_embed) {
          v = add_bias(v, type_visual);
          s = add_bias(s, type_semantic);
        }
        const int n = v.dim(1), t_len = s.dim(1);
        Tensor<T> joint = concat<T>({v, s}, 1);
        for (auto& b : blocks) joint = b(joint, nullptr, joint_mask);
        return {slice(joint, 1, 0, n), slice(joint, 1, n, t_len)};
      }
    }
    throw ConfigError("unreachable fe variant");
  }

  /// Mean post-softmax attention per modality quadrant from the last call:
  /// rows/cols are [visual, semantic]. Requires capture_attn.
  std::array<std::array<double, 2>, 2> attention_stats(int n_visual) const {
    std::array<std::array<double, 2>, 2> acc{};
    std::array<std::array<int64_t, 2>, 2> cnt{};
    for (const auto& b : blocks) {
      const Tensor<T>& a = b.attn.last_attn;
      if (!a.data) continue;
      const int bh = a.dim(0), lq = a.dim(1), lk = a.dim(2);
      const T* p = a.ptr();
      for (int i = 0; i < bh; ++i)
        for (int q = 0; q < lq; ++q)
          for (int kk = 0; kk < lk; ++kk) {
            const int qi = q < n_visual ? 0 : 1;
            const int ki = kk < n_visual ? 0 : 1;
            acc[qi][ki] += static_cast<double>(p[(static_cast<int64_t>(i) * lq + q) * lk + kk]);
            ++cnt[qi][ki];
          }
    }
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (cnt[i][j]) acc[i][j] /= static_cast<double>(cnt[i][j]);
    return acc;
  }
};

}  // namespace matrn
