#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <set>

#include "doctest.h"
#include "matrn/decoder.hpp"
#include "matrn/lm.hpp"
#include "test_util.hpp"

using namespace matrn;
using matrn::testing::random_tensor;

namespace {

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.d_model = 16;
  cfg.t_max = 4;
  cfg.heads = 2;
  cfg.lm_blocks = 2;
  cfg.img_h = 8;
  cfg.img_w = 16;
  cfg.backbone_widths = {8, 8, 16, 16};
  return cfg;
}

}  // namespace

TEST_CASE("mini u-net preserves the sequence geometry") {
  ParamRegistry<float> reg;
  std::mt19937 rng(0);
  MiniUNet<float> unet(reg, "u", 16, rng);
  auto v = random_tensor<float>({2, 8, 16}, rng);  // h4=2, w4=4
  auto out = unet(v, 2, 4);
  CHECK(out.shape == Shape{2, 8, 16});
}

TEST_CASE("mini u-net rejects odd feature map dims") {
  ParamRegistry<float> reg;
  std::mt19937 rng(0);
  MiniUNet<float> unet(reg, "u", 16, rng);
  auto v = random_tensor<float>({1, 12, 16}, rng);
  CHECK_THROWS_AS(unet(v, 3, 4), ConfigError);
}

TEST_CASE("zeroing the skip branch changes the u-net output") {
  ParamRegistry<float> reg;
  std::mt19937 rng(1);
  MiniUNet<float> unet(reg, "u", 16, rng);
  auto v = random_tensor<float>({1, 8, 16}, rng);
  auto a = unet(v, 2, 4);
  unet.zero_skip = true;
  auto b = unet(v, 2, 4);
  CHECK(*a.data != *b.data);
}

TEST_CASE("gradient reaches both u-net encoder and decoder convs") {
  ParamRegistry<float> reg;
  std::mt19937 rng(2);
  MiniUNet<float> unet(reg, "u", 16, rng);
  auto v = random_tensor<float>({1, 8, 16}, rng);
  Tape<float> tape;
  auto loss = sum_all(unet(v, 2, 4));
  tape.backward(loss);
  auto l1 = [](const Tensor<float>& t) {
    double s = 0;
    for (float g : *t.grad) s += std::abs(g);
    return s;
  };
  CHECK(l1(unet.down.w) > 0);
  CHECK(l1(unet.bottleneck.w) > 0);
  CHECK(l1(unet.fuse.w) > 0);
}

TEST_CASE("attention rows are stochastic") {
  TrainConfig cfg = tiny_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(3);
  AttentionGenerator<float> gen(reg, "g", cfg, rng);
  auto v = random_tensor<float>({2, 8, 16}, rng);
  auto r = gen(v, 2, 4);
  REQUIRE(r.attn.shape == Shape{2, 4, 8});
  const float* p = r.attn.ptr();
  for (int row = 0; row < 2 * 4; ++row) {
    double s = 0;
    for (int k = 0; k < 8; ++k) {
      CHECK(p[row * 8 + k] >= 0.f);
      s += p[row * 8 + k];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("two-query three-key attention matches the scalar softmax formula") {
  // queries q, keys k, logits q.k / sqrt(d) with d = 2
  auto q = Tensor<double>::from_vector({1, 2, 2}, {1, 0, 0, 1});
  auto k = Tensor<double>::from_vector({1, 3, 2}, {1, 0, 0, 1, 1, 1});
  auto logits = scale(bmm(q, k, false, true), 1.0 / std::sqrt(2.0));
  auto attn = softmax(logits, -1);
  const double s = 1.0 / std::sqrt(2.0);
  // row 0 logits: s, 0, s ; row 1 logits: 0, s, s
  const double e = std::exp(s);
  const double z = 2 * e + 1;
  CHECK((*attn.data)[0] == doctest::Approx(e / z).epsilon(1e-12));
  CHECK((*attn.data)[1] == doctest::Approx(1 / z).epsilon(1e-12));
  CHECK((*attn.data)[2] == doctest::Approx(e / z).epsilon(1e-12));
  CHECK((*attn.data)[3] == doctest::Approx(1 / z).epsilon(1e-12));
  CHECK((*attn.data)[4] == doctest::Approx(e / z).epsilon(1e-12));
  CHECK((*attn.data)[5] == doctest::Approx(e / z).epsilon(1e-12));
}

TEST_CASE("attention concentrates on a dominant key") {
  const int d = 16;
  auto q = Tensor<float>::zeros({1, 1, d});
  (*q.data)[0] = 1.f;
  auto k = Tensor<float>::zeros({1, 8, d});
  (*k.data)[3 * d] = 100.f;  // key 3 strongly aligned with the query
  auto attn = softmax(scale(bmm(q, k, false, true), 1.f / std::sqrt(static_cast<float>(d))), -1);
  CHECK((*attn.data)[3] >= 0.99f);
}

TEST_CASE("aggregation copies, averages and matches a matmul oracle") {
  auto v = Tensor<float>::from_vector({1, 3, 2}, {1, 2, 3, 4, 5, 6});

  auto onehot = Tensor<float>::from_vector({1, 1, 3}, {0, 1, 0});
  auto e1 = bmm(onehot, v);
  CHECK((*e1.data)[0] == 3.f);
  CHECK((*e1.data)[1] == 4.f);

  auto uniform = Tensor<float>::full({1, 1, 3}, 1.f / 3.f);
  auto e2 = bmm(uniform, v);
  CHECK((*e2.data)[0] == doctest::Approx(3.f).epsilon(1e-6));
  CHECK((*e2.data)[1] == doctest::Approx(4.f).epsilon(1e-6));

  std::mt19937 rng(4);
  auto a = random_tensor<float>({1, 4, 3}, rng);
  auto e3 = bmm(a, v);
  for (int t = 0; t < 4; ++t) {
    for (int c = 0; c < 2; ++c) {
      double acc = 0;
      for (int n = 0; n < 3; ++n)
        acc += static_cast<double>((*a.data)[t * 3 + n]) * (*v.data)[n * 2 + c];
      CHECK((*e3.data)[t * 2 + c] == doctest::Approx(acc).epsilon(1e-6));
    }
  }
}

TEST_CASE("zero classifier weights give the uniform distribution") {
  auto e = Tensor<float>::from_vector({2, 3}, {1, -2, 3, 0.5f, 0, -1});
  auto w = Tensor<float>::zeros({3, 37});
  auto probs = softmax(matmul(e, w), -1);
  for (float v : *probs.data) CHECK(v == doctest::Approx(1.f / 37.f).epsilon(1e-6));
}

TEST_CASE("greedy decode reproduces a planted string and stops at pad") {
  const std::string word = "cab1";
  TokenSequence seq = encode_label(word, 8);
  auto logits = Tensor<float>::zeros({1, 8, 37});
  for (int t = 0; t < 8; ++t)
    (*logits.data)[static_cast<size_t>(t * 37 + seq.indices[static_cast<size_t>(t)])] = 10.f;
  // garbage after the first pad must be ignored
  (*logits.data)[static_cast<size_t>(6 * 37 + 5)] = 20.f;
  auto words = greedy_decode(logits);
  REQUIRE(words.size() == 1);
  CHECK(words[0] == word);
}

TEST_CASE("two generators hold disjoint parameter sets") {
  TrainConfig cfg = tiny_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(5);
  AttentionGenerator<float> seed(reg, "seed", cfg, rng);
  AttentionGenerator<float> chargen(reg, "chargen", cfg, rng);
  std::set<const void*> seed_bufs, char_bufs;
  for (const auto& [name, t] : reg.items) {
    if (name.rfind("seed.", 0) == 0) seed_bufs.insert(t.data.get());
    if (name.rfind("chargen.", 0) == 0) char_bufs.insert(t.data.get());
  }
  CHECK(seed_bufs.size() == char_bufs.size());
  for (const void* p : seed_bufs) CHECK(char_bufs.count(p) == 0);
}

TEST_CASE("language model output has the semantic feature shape") {
  TrainConfig cfg = tiny_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(6);
  LanguageModel<float> lm(reg, "lm", cfg, rng);
  auto y = Tensor<float>::full({2, 4, 37}, 1.f / 37.f);
  auto s = lm(y);
  CHECK(s.shape == Shape{2, 4, 16});
  for (float v : *s.data) CHECK(std::isfinite(v));
}

TEST_CASE("language model is position aware") {
  TrainConfig cfg = tiny_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(7);
  LanguageModel<float> lm(reg, "lm", cfg, rng);
  auto mk = [&](const std::vector<int>& chars) {
    auto y = Tensor<float>::zeros({1, 4, 37});
    for (int t = 0; t < 4; ++t) (*y.data)[static_cast<size_t>(t * 37 + chars[static_cast<size_t>(t)])] = 1.f;
    return y;
  };
  auto s1 = lm(mk({10, 11, 12, 36}));
  auto s2 = lm(mk({12, 11, 10, 36}));
  CHECK(*s1.data != *s2.data);
}

TEST_CASE("gradients stop at the language model input") {
  TrainConfig cfg = tiny_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(8);
  LanguageModel<float> lm(reg, "lm", cfg, rng);
  auto logits = random_tensor<float>({1, 4, 37}, rng);
  logits.ensure_grad();
  Tape<float> tape;
  auto y = softmax(logits, -1);
  auto loss = sum_all(lm(y));
  tape.backward(loss);
  for (float g : *logits.grad) CHECK(g == 0.f);
  double emb = 0;
  for (float g : *lm.embed.w.grad) emb += std::abs(g);
  CHECK(emb > 0);
}

TEST_CASE("non-stochastic input rows are rejected") {
  TrainConfig cfg = tiny_cfg();
  ParamRegistry<float> reg;
  std::mt19937 rng(9);
  LanguageModel<float> lm(reg, "lm", cfg, rng);
  auto y = Tensor<float>::full({1, 4, 37}, 1.f / 37.f);
  (*y.data)[0] += 0.01f;
  CHECK_THROWS_AS(lm(y), InputError);
}

TEST_CASE("diagonal mask blocks exactly the identity pair") {
  auto m = diagonal_attention_mask<float>(3);
  REQUIRE(m.shape == Shape{3, 3});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      float v = (*m.data)[static_cast<size_t>(i * 3 + j)];
      if (i == j)
        CHECK(v == -std::numeric_limits<float>::infinity());
      else
        CHECK(v == 0.f);
    }
  }
  auto logits = Tensor<float>::zeros({1, 3, 3});
  auto w = softmax(add_broadcast0(logits, m), -1);
  for (int i = 0; i < 3; ++i) CHECK((*w.data)[static_cast<size_t>(i * 3 + i)] == 0.f);
}

TEST_CASE("with the mask, position i ignores its own character") {
  TrainConfig cfg = tiny_cfg();
  cfg.lm_blocks = 1;
  std::mt19937 rng(10);

  auto mk = [&](int c2) {
    auto y = Tensor<float>::zeros({1, 4, 37});
    int chars[4] = {10, 11, c2, 36};
    for (int t = 0; t < 4; ++t) (*y.data)[static_cast<size_t>(t * 37 + chars[t])] = 1.f;
    return y;
  };

  {
    ParamRegistry<float> reg;
    std::mt19937 r2(10);
    LanguageModel<float> lm(reg, "lm", cfg, r2);
    auto s1 = lm(mk(12));
    auto s2 = lm(mk(20));
    // one decoder block: everything after the cross-attention is positionwise,
    // so row 2 must be identical when only character 2 changes
    const int d = cfg.d_model;
    for (int k = 0; k < d; ++k)
      CHECK((*s1.data)[static_cast<size_t>(2 * d + k)] ==
            doctest::Approx((*s2.data)[static_cast<size_t>(2 * d + k)]).epsilon(1e-6));
  }
  {
    TrainConfig cfg2 = cfg;
    cfg2.lm_diag_mask = false;
    ParamRegistry<float> reg;
    std::mt19937 r2(10);
    LanguageModel<float> lm(reg, "lm", cfg2, r2);
    auto s1 = lm(mk(12));
    auto s2 = lm(mk(20));
    const int d = cfg.d_model;
    double diff = 0;
    for (int k = 0; k < d; ++k)
      diff += std::abs((*s1.data)[static_cast<size_t>(2 * d + k)] -
                       (*s2.data)[static_cast<size_t>(2 * d + k)]);
    CHECK(diff > 1e-4);
  }
}
