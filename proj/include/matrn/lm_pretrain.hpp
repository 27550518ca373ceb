#pragma once

#include <functional>
#include <random>

#include "matrn/decoder.hpp"
#include "matrn/lm.hpp"
#include "matrn/optim.hpp"

namespace matrn {

/// Standalone spell-corrector: the language model plus a classification head,
/// trained to map single-character corruptions of lexicon words back to the
/// originals. One-hot inputs stand in for the recognizer's soft distributions.
template <class T>
struct LmCorrector {
  ParamRegistry<T> reg;
  LanguageModel<T> lm;
  Linear<T> head;
  TrainConfig cfg;

  explicit LmCorrector(const TrainConfig& cfg_, uint64_t seed) : cfg(cfg_) {
    std::mt19937 rng(static_cast<uint32_t>(seed));
    lm = LanguageModel<T>(reg, "lm", cfg, rng);
    head = Linear<T>(reg, "head", cfg.d_model, Charset::kNumClasses, rng);
  }

  Tensor<T> logits(const Tensor<T>& y) { return head(lm(y)); }
};

inline std::string corrupt_word(const std::string& word, std::mt19937& rng) {
  const std::string alphabet = "0123456789abcdefghijklmnopqrstuvwxyz";
  std::string out = word;
  const size_t pos = rng() % out.size();
  char repl;
  do {
    repl = alphabet[rng() % alphabet.size()];
  } while (repl == out[pos]);
  out[pos] = repl;
  return out;
}

template <class T>
Tensor<T> one_hot_batch(const std::vector<std::string>& words, int t_max) {
  const int B = static_cast<int>(words.size());
  Tensor<T> y = Tensor<T>::zeros({B, t_max, Charset::kNumClasses});
  T* p = y.ptr();
  for (int b = 0; b < B; ++b) {
    TokenSequence seq = encode_label(words[static_cast<size_t>(b)], t_max);
    for (int t = 0; t < t_max; ++t)
      p[(static_cast<int64_t>(b) * t_max + t) * Charset::kNumClasses +
        seq.indices[static_cast<size_t>(t)]] = T(1);
  }
  return y;
}

/// Trains the corrector on fresh random corruptions each step.
template <class T>
void train_lm_corrector(LmCorrector<T>& model, const std::vector<std::string>& lexicon,
                        int steps, int batch_size, double lr, uint64_t seed,
                        const std::function<void(int, double)>& on_step = nullptr) {
  std::mt19937 rng(static_cast<uint32_t>(seed * 31 + 7));
  Adam<T> opt(static_cast<T>(lr));
  auto params = model.reg.tensors();
  for (int step = 0; step < steps; ++step) {
    std::vector<std::string> corrupted;
    std::vector<int> targets;
    for (int b = 0; b < batch_size; ++b) {
      const std::string& w = lexicon[rng() % lexicon.size()];
      corrupted.push_back(corrupt_word(w, rng));
      TokenSequence seq = encode_label(w, model.cfg.t_max);
      targets.insert(targets.end(), seq.indices.begin(), seq.indices.end());
    }
    Tensor<T> y = one_hot_batch<T>(corrupted, model.cfg.t_max);
    Tape<T> tape;
    Tensor<T> loss = cross_entropy(model.logits(y), targets);
    tape.backward(loss);
    opt.step(params);
    model.reg.zero_grad();
    if (on_step) on_step(step, static_cast<double>(loss.item()));
  }
}

/// Fraction of fresh corruptions decoded back to the original word.
template <class T>
double lm_correction_rate(LmCorrector<T>& model, const std::vector<std::string>& lexicon,
                          int trials, uint64_t seed) {
  std::mt19937 rng(static_cast<uint32_t>(seed * 101 + 3));
  int correct = 0;
  const int bs = 50;
  std::vector<std::string> batch_words, batch_truth;
  auto flush = [&]() {
    if (batch_words.empty()) return;
    Tensor<T> y = one_hot_batch<T>(batch_words, model.cfg.t_max);
    std::vector<std::string> decoded = greedy_decode(model.logits(y));
    for (size_t i = 0; i < decoded.size(); ++i)
      if (decoded[i] == batch_truth[i]) ++correct;
    batch_words.clear();
    batch_truth.clear();
  };
  for (int i = 0; i < trials; ++i) {
    const std::string& w = lexicon[rng() % lexicon.size()];
    batch_words.push_back(corrupt_word(w, rng));
    batch_truth.push_back(w);
    if (static_cast<int>(batch_words.size()) == bs) flush();
  }
  flush();
  return static_cast<double>(correct) / static_cast<double>(trials);
}

}  // namespace matrn
