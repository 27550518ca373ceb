#pragma once

#include <map>
#include <string>
#include <vector>

#include "matrn/errors.hpp"

namespace matrn {

enum class FeVariant { None, Semantic, Visual, Multimodal };
enum class SesMode { None, SequentialPe, Ses };
enum class MaskMode { None, Semantic, VisualRandom, VisualClue };

std::string to_string(FeVariant v);
std::string to_string(SesMode m);
std::string to_string(MaskMode m);
FeVariant fe_variant_from_string(const std::string& s);
SesMode ses_mode_from_string(const std::string& s);
MaskMode mask_mode_from_string(const std::string& s);

/// Full architecture + training configuration. The config alone determines
/// the parameter manifest of the model it builds.
struct TrainConfig {
  // model
  int d_model = 64;
  int t_max = 12;
  int iters = 3;  // M
  int heads = 4;
  int vision_blocks = 2;
  int fe_blocks = 2;
  int lm_blocks = 2;
  int ffn_mult = 2;
  int img_h = 16, img_w = 64, img_c = 1;
  std::vector<int> backbone_widths = {16, 24, 48, 64};
  int k_mask = 0;  // 0 = ceil(0.04 * HW/16)
  FeVariant fe_variant = FeVariant::Multimodal;
  SesMode ses_mode = SesMode::Ses;
  MaskMode mask_mode = MaskMode::VisualClue;
  bool share_ps = true;        // P^S shared between seed generator and LM
  bool lm_diag_mask = true;    // diagonal mask in LM cross-attention
  bool modality_embed = false; // learned modality-type vectors in joint FE
  double random_mask_prob = 0.04;
  double keep_prob = 0.1;      // visual clue masking keep probability
  std::string precision = "f32";

  // training
  int batch_size = 16;
  double lr = 2e-3;
  int lr_decay_epoch = 20;
  int epochs = 30;
  uint64_t seed = 0;
  int lexicon_size = 200;
  int per_word = 10;
  double val_fraction = 0.15;
  double aug_strength = 0.3;

  int visual_len() const { return (img_h / 4) * (img_w / 4); }
  int effective_k() const {
    if (k_mask > 0) return k_mask;
    const int n = visual_len();
    return (n * 4 + 99) / 100;  // ceil(0.04 * n)
  }
  void validate() const;
};

std::map<std::string, std::string> parse_config_file(const std::string& path);
void apply_config(const std::map<std::string, std::string>& kv, TrainConfig& cfg);
std::string serialize_config(const TrainConfig& cfg);
TrainConfig config_from_string(const std::string& text);

}  // namespace matrn
