#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "matrn/vision.hpp"
#include "test_util.hpp"

using namespace matrn;
using matrn::testing::random_tensor;

namespace {

TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.vision_blocks = 2;
  cfg.backbone_widths = {8, 8, 16, 16};
  cfg.img_h = 8;
  cfg.img_w = 16;
  return cfg;
}

}  // namespace

TEST_CASE("positional embedding is deterministic with values in [-1,1]") {
  auto a = sinusoidal_2d_pe<float>(4, 16, 64);
  auto b = sinusoidal_2d_pe<float>(4, 16, 64);
  CHECK(*a.data == *b.data);
  for (float v : *a.data) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("positional embedding rejects d not divisible by 4") {
  CHECK_THROWS_AS(sinusoidal_2d_pe<float>(4, 4, 30), ConfigError);
}

TEST_CASE("single-position embedding starts with sin(0) = 0") {
  auto pe = sinusoidal_2d_pe<float>(1, 1, 8);
  REQUIRE(pe.shape == Shape{1, 8});
  CHECK((*pe.data)[0] == 0.f);       // row sine
  CHECK((*pe.data)[1] == 1.f);       // row cosine
  CHECK((*pe.data)[4] == 0.f);       // column sine
}

TEST_CASE("all 64 positions get pairwise distinct embeddings (h=4,w=16,d=64)") {
  auto pe = sinusoidal_2d_pe<double>(4, 16, 64);
  const int n = 64, d = 64;
  const double* p = pe.ptr();
  double min_dist = 1e30;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double s = 0;
      for (int k = 0; k < d; ++k) {
        double diff = p[i * d + k] - p[j * d + k];
        s += diff * diff;
      }
      min_dist = std::min(min_dist, s);
    }
  }
  CHECK(min_dist > 1e-6);
}

TEST_CASE("backbone downsamples exactly 4x to d_model channels") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(0);
  ConvBackbone<float> bb(reg, "bb", cfg, rng);
  auto x = random_tensor<float>({2, 1, 8, 16}, rng);
  auto y = bb(x);
  CHECK(y.shape == Shape{2, 16, 2, 4});
}

TEST_CASE("zero image produces finite output through the bias path") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(1);
  ConvBackbone<float> bb(reg, "bb", cfg, rng);
  auto x = Tensor<float>::zeros({1, 1, 8, 16});
  auto y = bb(x);
  for (float v : *y.data) CHECK(std::isfinite(v));
}

TEST_CASE("gradient reaches the first conv kernel") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(2);
  ConvBackbone<float> bb(reg, "bb", cfg, rng);
  auto x = random_tensor<float>({1, 1, 8, 16}, rng);
  Tape<float> tape;
  auto loss = sum_all(bb(x));
  tape.backward(loss);
  double gnorm = 0;
  for (float g : *bb.stem.w.grad) gnorm += std::abs(g);
  CHECK(gnorm > 0);
}

TEST_CASE("mismatched backbone widths are a config error") {
  TrainConfig cfg = small_cfg();
  cfg.backbone_widths = {8, 8, 16, 32};  // does not end at d_model
  ParamRegistry<float> reg;
  std::mt19937 rng(0);
  CHECK_THROWS_AS(ConvBackbone<float>(reg, "bb", cfg, rng), ConfigError);
}

TEST_CASE("encoder output has the flattened sequence shape") {
  TrainConfig cfg;  // desk defaults: 16x64 image, D=64
  ParamRegistry<float> reg;
  std::mt19937 rng(3);
  VisionEncoder<float> enc(reg, "v", cfg, rng);
  auto x = random_tensor<float>({1, 1, 16, 64}, rng, 0.f, 1.f);
  auto v = enc(x);
  CHECK(v.shape == Shape{1, 64, 64});
}

TEST_CASE("with transformer bypassed, encode is backbone plus position embedding") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(4);
  VisionEncoder<float> enc(reg, "v", cfg, rng);
  enc.skip_transformer = true;
  auto x = random_tensor<float>({2, 1, 8, 16}, rng, 0.f, 1.f);
  auto got = enc(x);
  auto expect = add_broadcast0(enc.conv_features(x), enc.pe_flat);
  REQUIRE(got.shape == expect.shape);
  for (size_t i = 0; i < got.data->size(); ++i)
    CHECK((*got.data)[i] == doctest::Approx((*expect.data)[i]).epsilon(1e-6));
}

TEST_CASE("batch items do not leak into each other") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(5);
  VisionEncoder<float> enc(reg, "v", cfg, rng);
  auto a = random_tensor<float>({1, 1, 8, 16}, rng, 0.f, 1.f);
  auto b = random_tensor<float>({1, 1, 8, 16}, rng, 0.f, 1.f);
  auto ab = concat<float>({a, b}, 0);
  auto ba = concat<float>({b, a}, 0);
  auto vab = enc(ab);
  auto vba = enc(ba);
  const int64_t half = vab.size() / 2;
  for (int64_t i = 0; i < half; ++i) {
    CHECK((*vab.data)[static_cast<size_t>(i)] ==
          doctest::Approx((*vba.data)[static_cast<size_t>(half + i)]).epsilon(1e-5));
    CHECK((*vab.data)[static_cast<size_t>(half + i)] ==
          doctest::Approx((*vba.data)[static_cast<size_t>(i)]).epsilon(1e-5));
  }
}

TEST_CASE("visual self-attention rows are stochastic and unmasked") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(6);
  VisionEncoder<float> enc(reg, "v", cfg, rng);
  enc.tx[0].attn.capture_attn = true;
  auto x = random_tensor<float>({1, 1, 8, 16}, rng, 0.f, 1.f);
  enc(x);
  const Tensor<float>& attn = enc.tx[0].attn.last_attn;
  REQUIRE(attn.ndim() == 3);
  const int lk = attn.dim(2);
  const int64_t rows = attn.size() / lk;
  const float* p = attn.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0;
    for (int k = 0; k < lk; ++k) {
      s += p[r * lk + k];
      CHECK(p[r * lk + k] >= 0.f);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("position embedding changes outputs but adds no parameters") {
  TrainConfig cfg = small_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(7);
  VisionEncoder<float> enc(reg, "v", cfg, rng);
  const int64_t with_pe_params = reg.count();
  auto x = random_tensor<float>({1, 1, 8, 16}, rng, 0.f, 1.f);
  auto v1 = enc(x);
  enc.use_pe = false;
  auto v2 = enc(x);
  CHECK(*v1.data != *v2.data);
  CHECK(reg.count() == with_pe_params);
}
