#pragma once

#include "matrn/decoder.hpp"
#include "matrn/fusion.hpp"
#include "matrn/lm.hpp"
#include "matrn/vision.hpp"

namespace matrn {

/// All per-iteration features of one refinement round.
template <class T>
struct IterationBundle {
  Tensor<T> y_in;       // [B,T,C] LM input distributions
  Tensor<T> s;          // semantic features
  Tensor<T> s_align;    // after spatial encoding
  Tensor<T> vm, sm;     // multi-modal features
  Tensor<T> evm;        // aggregated multi-modal visual sequence
  Tensor<T> f;          // fused output features
  Tensor<T> s_logits, sm_logits, evm_logits, f_logits;
};

template <class T>
struct ForwardResult {
  Tensor<T> v_flat;            // [B,N,D] visual features (pre-masking)
  AttentionResult<T> seed;     // A, E^V, seed logits
  Tensor<T> y0;                // softmax of seed logits
  std::vector<IterationBundle<T>> bundles;
  std::vector<MaskLogEntry> mask_log;

  const Tensor<T>& final_logits() const {
    const auto& b = bundles.back();
    return b.f_logits.data ? b.f_logits : b.s_logits;
  }
};

template <class T>
struct LossBreakdown {
  Tensor<T> total;
  std::vector<std::pair<std::string, double>> terms;
};

/// The full multi-modal text recognizer: vision encoder, seed text generator,
/// language model, spatial encoding, feature enhancement, visual clue masking,
/// character generator and gated output fusion, iterated M times.
template <class T>
class Matrn {
 public:
  explicit Matrn(const TrainConfig& cfg) : cfg_(cfg), rng_(static_cast<uint32_t>(cfg.seed)) {
    cfg_.validate();
    if (cfg_.t_max == 1)
      throw ConfigError("T=1 leaves the diagonal LM mask with no attendable keys");
    vision_ = VisionEncoder<T>(reg_, "vision", cfg_, rng_);
    if (cfg_.share_ps) {
      shared_ps_ = reg_.add("shared.ps", trunc_normal_init<T>({cfg_.t_max, cfg_.d_model}, T(0.02), rng_));
      seed_gen_ = AttentionGenerator<T>(reg_, "seed", cfg_, rng_, &shared_ps_);
      lm_ = LanguageModel<T>(reg_, "lm", cfg_, rng_, &shared_ps_);
    } else {
      seed_gen_ = AttentionGenerator<T>(reg_, "seed", cfg_, rng_);
      lm_ = LanguageModel<T>(reg_, "lm", cfg_, rng_);
    }
    if (cfg_.fe_variant != FeVariant::None) {
      fe_ = FeatureEnhancer<T>(reg_, "fe", cfg_, rng_);
      char_gen_ = AttentionGenerator<T>(reg_, "chargen", cfg_, rng_);
      w_gated_ = reg_.add("fusion.w_gated",
                          normal_init<T>({2 * cfg_.d_model, cfg_.d_model},
                                         std::sqrt(T(1) / T(2 * cfg_.d_model)), rng_));
      head_sm_ = Linear<T>(reg_, "head.sm", cfg_.d_model, Charset::kNumClasses, rng_);
      head_f_ = Linear<T>(reg_, "head.f", cfg_.d_model, Charset::kNumClasses, rng_);
    }
    head_s_ = Linear<T>(reg_, "head.s", cfg_.d_model, Charset::kNumClasses, rng_);
    if (cfg_.mask_mode == MaskMode::VisualClue || cfg_.mask_mode == MaskMode::VisualRandom)
      v_mask_token_ = reg_.add("mask.v_token", trunc_normal_init<T>({cfg_.d_model}, T(0.02), rng_));
    if (cfg_.mask_mode == MaskMode::Semantic)
      s_mask_token_ = reg_.add("mask.s_token", trunc_normal_init<T>({cfg_.d_model}, T(0.02), rng_));
    seq_pe_ = sinusoidal_1d_pe<T>(cfg_.t_max, cfg_.d_model);
  }

  const TrainConfig& config() const { return cfg_; }
  ParamRegistry<T>& params() { return reg_; }
  const ParamRegistry<T>& params() const { return reg_; }
  int64_t parameter_count() const { return reg_.count(); }
  VisionEncoder<T>& vision() { return vision_; }
  AttentionGenerator<T>& seed_generator() { return seed_gen_; }
  AttentionGenerator<T>& char_generator() { return char_gen_; }
  LanguageModel<T>& language_model() { return lm_; }
  FeatureEnhancer<T>& feature_enhancer() { return fe_; }
  int64_t mask_call_count() const { return mask_calls_; }

  static int loss_term_count(const TrainConfig& cfg) {
    return 1 + cfg.iters * (cfg.fe_variant == FeVariant::None ? 1 : 4);
  }

  ForwardResult<T> forward(const Tensor<T>& images, const std::vector<int>& true_lengths,
                           bool training, std::mt19937& rng) {
    ForwardResult<T> res;
    res.v_flat = vision_(images);
    res.seed = seed_gen_(res.v_flat, vision_.h4, vision_.w4);
    res.y0 = softmax(res.seed.logits, -1);

    // masking is sampled once per step and shared across iterations
    Tensor<T> v_used = res.v_flat;
    std::vector<std::vector<int>> semantic_rows;
    if (training && cfg_.mask_mode == MaskMode::VisualClue) {
      ++mask_calls_;
      v_used = visual_clue_mask(res.v_flat, detach(res.seed.attn), true_lengths,
                                cfg_.effective_k(), cfg_.keep_prob, v_mask_token_, rng, training,
                                &res.mask_log);
    } else if (training && cfg_.mask_mode == MaskMode::VisualRandom) {
      ++mask_calls_;
      v_used = random_feature_mask(res.v_flat, cfg_.random_mask_prob, v_mask_token_, rng, training);
    } else if (training && cfg_.mask_mode == MaskMode::Semantic) {
      ++mask_calls_;
      const int B = images.dim(0);
      semantic_rows.assign(static_cast<size_t>(B), {});
      for (int b = 0; b < B; ++b)
        for (int r = 0; r < cfg_.t_max; ++r)
          if (((rng() >> 8) * (1.0 / 16777216.0)) < cfg_.random_mask_prob)
            semantic_rows[static_cast<size_t>(b)].push_back(r);
    }

    Tensor<T> y = res.y0;
    for (int iter = 0; iter < cfg_.iters; ++iter) {
      IterationBundle<T> b;
      b.y_in = detach(y);
      b.s = lm_(b.y_in);
      b.s_logits = head_s_(b.s);
      if (cfg_.fe_variant == FeVariant::None) {
        y = softmax(b.s_logits, -1);
        res.bundles.push_back(std::move(b));
        continue;
      }
      switch (cfg_.ses_mode) {
        case SesMode::Ses: b.s_align = ses(b.s, res.seed.attn, vision_.pe_flat); break;
        case SesMode::SequentialPe: b.s_align = add_broadcast0(b.s, seq_pe_); break;
        case SesMode::None: b.s_align = b.s; break;
      }
      Tensor<T> s_in = b.s_align;
      if (!semantic_rows.empty()) s_in = mask_rows(s_in, semantic_rows, s_mask_token_);
      auto [vm, sm] = fe_(v_used, s_in, fe_debug_mask_);
      b.vm = vm;
      b.sm = sm;
      AttentionResult<T> cg = char_gen_(vm, vision_.h4, vision_.w4);
      b.evm = cg.features;
      b.evm_logits = cg.logits;
      b.sm_logits = head_sm_(sm);
      b.f = gated_fusion(b.evm, b.sm, w_gated_);
      b.f_logits = head_f_(b.f);
      y = softmax(b.f_logits, -1);
      res.bundles.push_back(std::move(b));
    }
    return res;
  }

  /// Eq-9 shaped multi-task loss over all prediction heads.
  LossBreakdown<T> total_loss(const ForwardResult<T>& res, const std::vector<int>& targets) {
    LossBreakdown<T> out;
    Tensor<T> l_ev = cross_entropy(res.seed.logits, targets);
    out.terms.emplace_back("L_EV", static_cast<double>(l_ev.item()));
    Tensor<T> iter_sum;
    const int m = static_cast<int>(res.bundles.size());
    for (int i = 0; i < m; ++i) {
      const auto& b = res.bundles[static_cast<size_t>(i)];
      const std::string sfx = "_" + std::to_string(i + 1);
      Tensor<T> term = cross_entropy(b.s_logits, targets);
      out.terms.emplace_back("L_S" + sfx, static_cast<double>(term.item()));
      if (b.f_logits.data) {
        Tensor<T> l_sm = cross_entropy(b.sm_logits, targets);
        Tensor<T> l_evm = cross_entropy(b.evm_logits, targets);
        Tensor<T> l_f = cross_entropy(b.f_logits, targets);
        out.terms.emplace_back("L_SM" + sfx, static_cast<double>(l_sm.item()));
        out.terms.emplace_back("L_EVM" + sfx, static_cast<double>(l_evm.item()));
        out.terms.emplace_back("L_F" + sfx, static_cast<double>(l_f.item()));
        term = add(add(term, l_sm), add(l_evm, l_f));
      }
      iter_sum = iter_sum.data ? add(iter_sum, term) : term;
    }
    out.total = add(l_ev, scale(iter_sum, T(1) / T(m)));
    return out;
  }

  /// Debug hook: restrict multi-modal FE attention (isolation probes).
  void set_fe_debug_mask(const Tensor<T>* mask) { fe_debug_mask_ = mask; }

 private:
  TrainConfig cfg_;
  ParamRegistry<T> reg_;
  std::mt19937 rng_;
  VisionEncoder<T> vision_;
  AttentionGenerator<T> seed_gen_, char_gen_;
  LanguageModel<T> lm_;
  FeatureEnhancer<T> fe_;
  Linear<T> head_s_, head_sm_, head_f_;
  Tensor<T> w_gated_, shared_ps_, v_mask_token_, s_mask_token_, seq_pe_;
  const Tensor<T>* fe_debug_mask_ = nullptr;
  int64_t mask_calls_ = 0;
};

}  // namespace matrn
