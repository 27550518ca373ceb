#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "matrn/image.hpp"

namespace matrn {

ImageSample resize(const ImageSample& src, int out_h, int out_w) {
  if (src.h <= 0 || src.w <= 0) throw DimensionError("resize: empty source image");
  ImageSample out;
  out.h = out_h;
  out.w = out_w;
  out.c = src.c;
  out.label = src.label;
  out.pixels.assign(static_cast<size_t>(out_h) * out_w * src.c, 0.f);
  if (out_h == src.h && out_w == src.w) {
    out.pixels = src.pixels;
    out.char_boxes = src.char_boxes;
    return out;
  }
  const float sy = static_cast<float>(src.h) / out_h;
  const float sx = static_cast<float>(src.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const float fy = std::max(0.f, (y + 0.5f) * sy - 0.5f);
    const int y0 = std::min(static_cast<int>(fy), src.h - 1);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const float wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const float fx = std::max(0.f, (x + 0.5f) * sx - 0.5f);
      const int x0 = std::min(static_cast<int>(fx), src.w - 1);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const float wx = fx - x0;
      for (int ch = 0; ch < src.c; ++ch) {
        const float v = (1 - wy) * ((1 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch)) +
                        wy * ((1 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch));
        out.at(y, x, ch) = v;
      }
    }
  }
  // scale char boxes along x
  for (const auto& b : src.char_boxes) {
    out.char_boxes.push_back({static_cast<int>(b[0] / sx), static_cast<int>(b[1] / sx)});
  }
  return out;
}

ImageSample convert_channels(const ImageSample& src, int out_c) {
  if (src.c == out_c) return src;
  ImageSample out;
  out.h = src.h;
  out.w = src.w;
  out.c = out_c;
  out.label = src.label;
  out.char_boxes = src.char_boxes;
  out.pixels.assign(static_cast<size_t>(src.h) * src.w * out_c, 0.f);
  for (int y = 0; y < src.h; ++y) {
    for (int x = 0; x < src.w; ++x) {
      if (src.c == 1) {
        for (int ch = 0; ch < out_c; ++ch) out.at(y, x, ch) = src.at(y, x, 0);
      } else {
        float m = 0.f;
        for (int ch = 0; ch < src.c; ++ch) m += src.at(y, x, ch);
        m /= static_cast<float>(src.c);
        for (int ch = 0; ch < out_c; ++ch) out.at(y, x, ch) = m;
      }
    }
  }
  return out;
}

void write_pnm(const std::string& path, const ImageSample& img) {
  if (img.c != 1 && img.c != 3)
    throw IoError("write_pnm: only 1 or 3 channels supported, got " + std::to_string(img.c));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> buf(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::min(1.f, std::max(0.f, img.pixels[i]));
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.f));
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("short write to " + path);
}

namespace {
int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw IoError("malformed PNM header");
  return v;
}
}  // namespace

ImageSample read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string magic;
  f >> magic;
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw IoError(path + ": unsupported PNM magic '" + magic + "' (need P5 or P6)");
  const int w = read_pnm_token(f);
  const int h = read_pnm_token(f);
  const int maxval = read_pnm_token(f);
  if (maxval != 255) throw IoError(path + ": only maxval 255 supported");
  f.get();  // single whitespace after header
  ImageSample img;
  img.h = h;
  img.w = w;
  img.c = channels;
  const size_t n = static_cast<size_t>(h) * w * channels;
  std::vector<unsigned char> buf(n);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(f.gcount()) != n) throw IoError(path + ": truncated pixel data");
  img.pixels.resize(n);
  for (size_t i = 0; i < n; ++i) img.pixels[i] = buf[i] / 255.f;
  return img;
}

}  // namespace matrn
