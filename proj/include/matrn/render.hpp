#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "matrn/image.hpp"

namespace matrn {

/// 5x7 bitmap glyph rows for [0-9a-z]; bit 4 is the leftmost column.
const uint8_t* glyph_rows(char c);

struct AugmentParams {
  float strength = 1.f;       // 0 disables augmentation entirely
  float max_rotation = 10.f;  // degrees
  float max_brightness = 0.15f;
  float max_contrast = 0.2f;
  float noise_std = 0.05f;
};

/// Deterministic synthetic word image from the built-in bitmap font.
/// Per-seed variation: glyph scale, slant, stroke, spacing, fg/bg levels.
ImageSample render_word(const std::string& text, uint64_t style_seed);

/// Random rotation, brightness/contrast jitter and Gaussian noise.
/// Label is preserved; output stays in [0, 1]. strength 0 is the identity.
ImageSample augment(const ImageSample& sample, std::mt19937& rng,
                    const AugmentParams& params = {});

}  // namespace matrn
