#include <algorithm>
#include <cmath>
#include <cstring>

#include "matrn/charset.hpp"
#include "matrn/render.hpp"

namespace matrn {

namespace {

// 5x7 font, one string per row, '#' = on. Index: digits then a-z.
const char* const kFont[36][7] = {
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},  // 0
    {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},  // 1
    {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},  // 2
    {" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "},  // 3
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},  // 4
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},  // 5
    {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "},  // 6
    {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "},  // 7
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},  // 8
    {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "},  // 9
    {"  #  ", " # # ", "#   #", "#   #", "#####", "#   #", "#   #"},  // a
    {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "},  // b
    {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "},  // c
    {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "},  // d
    {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"},  // e
    {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "},  // f
    {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"},  // g
    {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"},  // h
    {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},  // i
    {"    #", "    #", "    #", "    #", "    #", "#   #", " ### "},  // j
    {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"},  // k
    {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"},  // l
    {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"},  // m
    {"#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"},  // n
    {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "},  // o
    {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "},  // p
    {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"},  // q
    {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"},  // r
    {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "},  // s
    {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "},  // t
    {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "},  // u
    {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "},  // v
    {"#   #", "#   #", "#   #", "# # #", "# # #", "## ##", "#   #"},  // w
    {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"},  // x
    {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "},  // y
    {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"},  // z
};

uint8_t g_glyph_bits[36][7];
bool g_glyphs_built = false;

void build_glyphs() {
  if (g_glyphs_built) return;
  for (int g = 0; g < 36; ++g)
    for (int r = 0; r < 7; ++r) {
      uint8_t bits = 0;
      for (int c = 0; c < 5; ++c)
        if (kFont[g][r][c] == '#') bits |= static_cast<uint8_t>(1u << (4 - c));
      g_glyph_bits[g][r] = bits;
    }
  g_glyphs_built = true;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

double u01(std::mt19937& rng) { return (rng() >> 8) * (1.0 / 16777216.0); }

double uniform(std::mt19937& rng, double lo, double hi) { return lo + (hi - lo) * u01(rng); }

int uniform_int(std::mt19937& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(u01(rng) * (hi - lo + 1)) % (hi - lo + 1);
}

}  // namespace

const uint8_t* glyph_rows(char c) {
  build_glyphs();
  const int idx = Charset::index_of(c);
  return g_glyph_bits[idx];
}

ImageSample render_word(const std::string& text, uint64_t style_seed) {
  if (text.empty()) throw CharsetError("render_word: empty text");
  const std::string word = Charset::lowercase(text);
  for (char c : word) Charset::index_of(c);  // validates

  std::mt19937 rng(static_cast<uint32_t>(style_seed ^ fnv1a(word)));
  const int s = uniform_int(rng, 2, 3);                 // glyph pixel scale
  const bool bold = u01(rng) < 0.35;                    // thicker stroke
  const double slant = uniform(rng, -0.2, 0.2);         // x shift per y
  const int spacing = uniform_int(rng, 1, 2) * s;       // inter-char gap
  const float bg = static_cast<float>(uniform(rng, 0.05, 0.30));
  const float fg = static_cast<float>(uniform(rng, 0.70, 0.95));

  const int glyph_w = 5 * s, glyph_h = 7 * s;
  const int pad_y = 2 * s;
  const int h = glyph_h + 2 * pad_y;
  const int slant_extra = static_cast<int>(std::ceil(std::abs(slant) * h)) + 1;
  const int pad_x = 2 * s + slant_extra;
  const int n = static_cast<int>(word.size());
  const int w = 2 * pad_x + n * glyph_w + (n - 1) * spacing + (bold ? n : 0);

  ImageSample img;
  img.h = h;
  img.w = w;
  img.c = 1;
  img.label = word;
  img.pixels.assign(static_cast<size_t>(h) * w, bg);

  int x_cursor = pad_x;
  for (int ci = 0; ci < n; ++ci) {
    const uint8_t* rows = glyph_rows(word[static_cast<size_t>(ci)]);
    const int y_off = pad_y + uniform_int(rng, -s / 2, s / 2);
    const int x0 = x_cursor;
    for (int gr = 0; gr < 7; ++gr) {
      for (int gc = 0; gc < 5; ++gc) {
        if (!(rows[gr] & (1u << (4 - gc)))) continue;
        for (int dy = 0; dy < s; ++dy) {
          const int y = y_off + gr * s + dy;
          if (y < 0 || y >= h) continue;
          const int shift = static_cast<int>(slant * (h - 1 - y));
          for (int dx = 0; dx < s + (bold ? 1 : 0); ++dx) {
            const int x = x_cursor + gc * s + dx + shift;
            if (x >= 0 && x < w) img.at(y, x) = fg;
          }
        }
      }
    }
    const int box_w = glyph_w + (bold ? 1 : 0);
    img.char_boxes.push_back({x0, x0 + box_w});
    x_cursor += box_w + spacing;
  }
  return img;
}

ImageSample augment(const ImageSample& sample, std::mt19937& rng, const AugmentParams& params) {
  if (params.strength <= 0.f) return sample;
  const double angle = uniform(rng, -params.max_rotation, params.max_rotation) * params.strength *
                       M_PI / 180.0;
  const float brightness =
      static_cast<float>(uniform(rng, -params.max_brightness, params.max_brightness)) *
      params.strength;
  const float contrast =
      1.f + static_cast<float>(uniform(rng, -params.max_contrast, params.max_contrast)) *
                params.strength;
  const float sigma = static_cast<float>(uniform(rng, 0.0, params.noise_std)) * params.strength;

  ImageSample out = sample;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double cy = (sample.h - 1) / 2.0, cx = (sample.w - 1) / 2.0;
  for (int y = 0; y < sample.h; ++y) {
    for (int x = 0; x < sample.w; ++x) {
      // inverse rotation, clamp-to-edge bilinear
      const double dx = x - cx, dy = y - cy;
      const double sxf = ca * dx + sa * dy + cx;
      const double syf = -sa * dx + ca * dy + cy;
      const int x0 = std::clamp(static_cast<int>(std::floor(sxf)), 0, sample.w - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor(syf)), 0, sample.h - 1);
      const int x1 = std::min(x0 + 1, sample.w - 1);
      const int y1 = std::min(y0 + 1, sample.h - 1);
      const float wx = static_cast<float>(std::clamp(sxf - x0, 0.0, 1.0));
      const float wy = static_cast<float>(std::clamp(syf - y0, 0.0, 1.0));
      for (int ch = 0; ch < sample.c; ++ch) {
        const float v =
            (1 - wy) * ((1 - wx) * sample.at(y0, x0, ch) + wx * sample.at(y0, x1, ch)) +
            wy * ((1 - wx) * sample.at(y1, x0, ch) + wx * sample.at(y1, x1, ch));
        out.at(y, x, ch) = v;
      }
    }
  }
  std::normal_distribution<float> noise(0.f, 1.f);
  for (float& v : out.pixels) {
    float nv = (v - 0.5f) * contrast + 0.5f + brightness;
    if (sigma > 0.f) nv += noise(rng) * sigma;
    v = std::clamp(nv, 0.f, 1.f);
  }
  return out;
}

}  // namespace matrn
