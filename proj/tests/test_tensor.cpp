#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "matrn/optim.hpp"
#include "test_util.hpp"

using namespace matrn;
using matrn::testing::gradient_check;
using matrn::testing::random_tensor;

TEST_CASE("matmul identity and hand cases") {
  auto i2 = Tensor<float>::from_vector({2, 2}, {1, 0, 0, 1});
  auto a = Tensor<float>::from_vector({2, 2}, {1, 2, 3, 4});
  auto r = matmul(i2, a);
  for (int i = 0; i < 4; ++i) CHECK((*r.data)[i] == doctest::Approx((*a.data)[i]));

  auto row = Tensor<float>::from_vector({1, 2}, {1, 2});
  auto col = Tensor<float>::from_vector({2, 1}, {3, 4});
  CHECK(matmul(row, col).item() == doctest::Approx(11.f));

  CHECK_THROWS_AS(matmul(row, row), DimensionError);
}

TEST_CASE("matmul gradient vs finite differences") {
  for (uint32_t seed = 0; seed < 3; ++seed) {
    std::mt19937 rng(seed);
    auto a = random_tensor<float>({3, 4}, rng);
    auto b = random_tensor<float>({4, 2}, rng);
    auto f = [](const std::vector<Tensor<float>>& in) {
      return sum_all(matmul(in[0], in[1]));
    };
    CHECK(gradient_check<float>(f, {a, b}, 1e-3f) < 1e-3);
  }
}

TEST_CASE("softmax basics") {
  auto x = Tensor<float>::from_vector({2}, {0, 0});
  auto y = softmax(x, 0);
  CHECK((*y.data)[0] == doctest::Approx(0.5f));

  auto big = Tensor<float>::from_vector({2}, {1000, 0});
  auto yb = softmax(big, 0);
  CHECK((*yb.data)[0] == doctest::Approx(1.f));
  CHECK((*yb.data)[1] == doctest::Approx(0.f));

  auto nan_in = Tensor<float>::from_vector({2}, {std::nanf(""), 0});
  CHECK_THROWS_AS(softmax(nan_in, 0), NumericError);
}

TEST_CASE("softmax rows sum to one up to magnitude 1e4") {
  std::mt19937 rng(7);
  auto x = random_tensor<float>({4, 9}, rng, -1e4f, 1e4f);
  auto y = softmax(x, -1);
  for (int r = 0; r < 4; ++r) {
    float s = 0;
    for (int c = 0; c < 9; ++c) s += (*y.data)[r * 9 + c];
    CHECK(std::abs(s - 1.f) < 1e-6f);
  }
}

TEST_CASE("softmax gradient") {
  for (uint32_t seed = 0; seed < 3; ++seed) {
    std::mt19937 rng(seed + 100);
    auto x = random_tensor<double>({2, 5}, rng);
    auto w = random_tensor<double>({2, 5}, rng);  // weights make the loss non-trivial
    auto f = [w](const std::vector<Tensor<double>>& in) {
      return sum_all(mul(softmax(in[0], -1), detach(w)));
    };
    CHECK(gradient_check<double>(f, {x}, 1e-5) < 1e-6);
  }
}

TEST_CASE("conv2d hand cases") {
  auto x = Tensor<float>::from_vector({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto k1 = Tensor<float>::from_vector({1, 1, 1, 1}, {1});
  Tensor<float> no_bias;
  auto y = conv2d(x, k1, no_bias, 1, 0);
  for (int i = 0; i < 9; ++i) CHECK((*y.data)[i] == doctest::Approx((*x.data)[i]));

  auto ones_x = Tensor<float>::full({1, 1, 3, 3}, 1.f);
  auto ones_k = Tensor<float>::full({1, 1, 3, 3}, 1.f);
  auto s = conv2d(ones_x, ones_k, no_bias, 1, 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == doctest::Approx(9.f));

  auto huge_k = Tensor<float>::full({1, 1, 5, 5}, 1.f);
  CHECK_THROWS_AS(conv2d(ones_x, huge_k, no_bias, 1, 0), DimensionError);
}

TEST_CASE("conv2d gradient") {
  for (uint32_t seed = 0; seed < 2; ++seed) {
    std::mt19937 rng(seed + 11);
    auto x = random_tensor<double>({1, 2, 5, 5}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto b = random_tensor<double>({3}, rng);
    auto f = [](const std::vector<Tensor<double>>& in) {
      return sum_all(gelu(conv2d(in[0], in[1], in[2], 2, 1)));
    };
    CHECK(gradient_check<double>(f, {x, w, b}, 1e-5) < 1e-6);
  }
}

TEST_CASE("elementwise basics") {
  CHECK(sigmoid(Tensor<float>::scalar(0)).item() == doctest::Approx(0.5f));

  auto c = Tensor<float>::full({6}, 3.f);
  auto gamma = Tensor<float>::full({6}, 1.f);
  auto beta = Tensor<float>::zeros({6});
  auto ln = layer_norm(c, gamma, beta);
  for (int i = 0; i < 6; ++i) CHECK(std::abs((*ln.data)[i]) < 1e-2f);  // epsilon handles zero variance
}

TEST_CASE("elementwise and structural gradients") {
  std::mt19937 rng(42);
  using V = std::vector<Tensor<double>>;
  auto check = [&](const std::function<Tensor<double>(const V&)>& f, V in) {
    CHECK(gradient_check<double>(f, std::move(in), 1e-5) < 1e-6);
  };
  check([](const V& in) { return sum_all(relu(in[0])); }, {random_tensor<double>({3, 4}, rng, 0.1, 1.0)});
  check([](const V& in) { return sum_all(gelu(in[0])); }, {random_tensor<double>({3, 4}, rng)});
  check([](const V& in) { return sum_all(sigmoid(in[0])); }, {random_tensor<double>({7}, rng)});
  check([](const V& in) { return sum_all(mul(in[0], in[1])); },
        {random_tensor<double>({5}, rng), random_tensor<double>({5}, rng)});
  check([](const V& in) { return sum_all(mul(add(in[0], in[1]), in[0])); },
        {random_tensor<double>({5}, rng), random_tensor<double>({5}, rng)});
  check([](const V& in) { return mean_all(concat<double>({in[0], in[1]}, 0)); },
        {random_tensor<double>({2, 3}, rng), random_tensor<double>({4, 3}, rng)});
  check([](const V& in) { return sum_all(mul(permute(in[0], {1, 0}), permute(in[0], {1, 0}))); },
        {random_tensor<double>({3, 4}, rng)});
  check([](const V& in) {
    auto g = Tensor<double>::full({4}, 0.7);
    auto b2 = Tensor<double>::full({4}, -0.1);
    return sum_all(mul(layer_norm(in[0], in[1], in[2]), in[0]));
  }, {random_tensor<double>({3, 4}, rng), random_tensor<double>({4}, rng, 0.5, 1.5),
      random_tensor<double>({4}, rng)});
  check([](const V& in) { return sum_all(slice(in[0], 1, 1, 2)); },
        {random_tensor<double>({3, 5}, rng)});
  check([](const V& in) { return sum_all(embedding_lookup(in[0], {0, 2, 2, 1})); },
        {random_tensor<double>({3, 4}, rng)});
  check([](const V& in) { return sum_all(add_bias(in[0], in[1])); },
        {random_tensor<double>({3, 4}, rng), random_tensor<double>({4}, rng)});
  check([](const V& in) { return sum_all(mul(add_broadcast0(in[0], in[1]), in[0])); },
        {random_tensor<double>({2, 3, 4}, rng), random_tensor<double>({3, 4}, rng)});
  check([](const V& in) { return sum_all(upsample_nearest2x(in[0])); },
        {random_tensor<double>({1, 2, 2, 3}, rng)});
  check([](const V& in) { return sum_all(bmm(in[0], in[1], false, true)); },
        {random_tensor<double>({2, 3, 4}, rng), random_tensor<double>({2, 5, 4}, rng)});
  check([](const V& in) { return sum_all(bmm(in[0], in[1])); },
        {random_tensor<double>({3, 4}, rng), random_tensor<double>({2, 4, 5}, rng)});
}

TEST_CASE("cross entropy") {
  auto logits = Tensor<float>::zeros({1, 4});
  auto loss = cross_entropy(logits, {2});
  CHECK(loss.item() == doctest::Approx(std::log(4.f)));

  auto sharp = Tensor<float>::from_vector({1, 3}, {50, 0, 0});
  CHECK(cross_entropy(sharp, {0}).item() < 1e-6f);

  CHECK_THROWS_AS(cross_entropy(logits, {7}), LabelError);

  // independent log-sum-exp oracle, f64
  std::mt19937 rng(3);
  auto l = random_tensor<double>({5, 7}, rng, -3.0, 3.0);
  std::vector<int> targets = {1, 0, 6, 3, 3};
  double expected = 0;
  for (int r = 0; r < 5; ++r) {
    double lse = 0;
    for (int c = 0; c < 7; ++c) lse += std::exp((*l.data)[r * 7 + c]);
    expected += std::log(lse) - (*l.data)[r * 7 + targets[r]];
  }
  expected /= 5;
  CHECK(std::abs(cross_entropy(l, targets).item() - expected) < 1e-6);
}

TEST_CASE("cross entropy gradient") {
  std::mt19937 rng(9);
  auto l = random_tensor<double>({4, 6}, rng);
  auto f = [](const std::vector<Tensor<double>>& in) {
    return cross_entropy(in[0], {0, 5, 2, 2});
  };
  CHECK(gradient_check<double>(f, {l}, 1e-5) < 1e-6);
}

TEST_CASE("backward seeds the loss gradient with exactly one") {
  auto w = Tensor<float>::from_vector({3}, {1, 2, 3});
  w.ensure_grad();
  Tape<float> tape;
  auto loss = sum_all(w);
  tape.backward(loss);
  CHECK((*loss.grad)[0] == 1.f);
  for (int i = 0; i < 3; ++i) CHECK((*w.grad)[i] == 1.f);
}

TEST_CASE("backward on non-scalar is a usage error") {
  auto w = Tensor<float>::from_vector({2}, {1, 2});
  w.ensure_grad();
  Tape<float> tape;
  auto y = relu(w);
  CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("adam first step is the bias-corrected analytic value") {
  auto w = Tensor<float>::zeros({1});
  w.ensure_grad();
  (*w.grad)[0] = 1.f;
  std::vector<Tensor<float>> params = {w};
  Adam<float> opt(0.1f);
  opt.step(params);
  CHECK((*w.data)[0] == doctest::Approx(-0.1f).epsilon(1e-4));
}

TEST_CASE("adam converges on a quadratic") {
  auto w = Tensor<float>::zeros({1});
  w.ensure_grad();
  std::vector<Tensor<float>> params = {w};
  Adam<float> opt(0.2f);
  for (int i = 0; i < 300; ++i) {
    w.zero_grad();
    Tape<float> tape;
    auto diff = add_scalar(w, -3.f);
    auto loss = sum_all(mul(diff, diff));
    tape.backward(loss);
    opt.step(params);
  }
  CHECK(std::abs((*w.data)[0] - 3.f) < 1e-2f);
}

TEST_CASE("tape determinism: identical runs give bit-identical results") {
  auto run = [] {
    std::mt19937 rng(5);
    auto a = random_tensor<float>({8, 8}, rng);
    auto b = random_tensor<float>({8, 8}, rng);
    a.ensure_grad();
    b.ensure_grad();
    Tape<float> tape;
    auto loss = sum_all(gelu(matmul(a, softmax(b, -1))));
    tape.backward(loss);
    std::vector<float> out = {loss.item()};
    out.insert(out.end(), a.grad->begin(), a.grad->end());
    return out;
  };
  auto r1 = run(), r2 = run();
  CHECK(r1 == r2);
}

TEST_CASE("composed graphs gradient check") {
  for (uint32_t seed = 0; seed < 3; ++seed) {
    std::mt19937 rng(seed + 77);
    auto a = random_tensor<double>({4, 4}, rng);
    auto b = random_tensor<double>({4, 4}, rng);
    auto f = [](const std::vector<Tensor<double>>& in) {
      auto h = matmul(in[0], in[1]);
      auto g = softmax(h, -1);
      auto r = mul(gelu(h), g);
      return mean_all(r);
    };
    CHECK(gradient_check<double>(f, {a, b}, 1e-5) < 1e-6);
  }
}
