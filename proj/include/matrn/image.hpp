#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "matrn/errors.hpp"

namespace matrn {

/// H x W x C image with values in [0, 1], plus its ground-truth label.
struct ImageSample {
  int h = 0, w = 0, c = 1;
  std::vector<float> pixels;  // HWC
  std::string label;
  std::vector<std::array<int, 2>> char_boxes;  // per-char [x0, x1) extents, diagnostics only

  float at(int y, int x, int ch = 0) const {
    return pixels[static_cast<size_t>((y * w + x) * c + ch)];
  }
  float& at(int y, int x, int ch = 0) {
    return pixels[static_cast<size_t>((y * w + x) * c + ch)];
  }
};

/// Stretch resize (no aspect preservation) with bilinear sampling.
ImageSample resize(const ImageSample& src, int out_h, int out_w);

/// Grayscale -> n-channel replication or RGB -> grayscale mean.
ImageSample convert_channels(const ImageSample& src, int out_c);

void write_pnm(const std::string& path, const ImageSample& img);
ImageSample read_pnm(const std::string& path);

}  // namespace matrn
