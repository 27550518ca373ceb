#pragma once

#include <chrono>
#include <functional>
#include <numeric>

#include "matrn/dataset.hpp"
#include "matrn/model.hpp"
#include "matrn/optim.hpp"

namespace matrn {

template <class T>
struct Batch {
  Tensor<T> images;  // [B, C, H, W]
  std::vector<int> targets;  // B*T flattened class indices
  std::vector<int> true_lengths;
  std::vector<std::string> labels;
};

template <class T>
Batch<T> make_batch(const std::vector<const ImageSample*>& samples, const TrainConfig& cfg) {
  const int B = static_cast<int>(samples.size());
  Batch<T> batch;
  batch.images = Tensor<T>::zeros({B, cfg.img_c, cfg.img_h, cfg.img_w});
  T* p = batch.images.ptr();
  for (int b = 0; b < B; ++b) {
    const ImageSample* s = samples[static_cast<size_t>(b)];
    if (s->h != cfg.img_h || s->w != cfg.img_w || s->c != cfg.img_c)
      throw DimensionError("batch sample dims do not match config input size");
    // HWC -> CHW
    for (int ch = 0; ch < cfg.img_c; ++ch)
      for (int y = 0; y < cfg.img_h; ++y)
        for (int x = 0; x < cfg.img_w; ++x)
          p[((static_cast<int64_t>(b) * cfg.img_c + ch) * cfg.img_h + y) * cfg.img_w + x] =
              static_cast<T>(s->at(y, x, ch));
    TokenSequence seq = encode_label(s->label, cfg.t_max);
    batch.targets.insert(batch.targets.end(), seq.indices.begin(), seq.indices.end());
    batch.true_lengths.push_back(seq.true_length);
    batch.labels.push_back(s->label);
  }
  return batch;
}

struct MetricsRecord {
  int epoch = 0;
  std::string split;
  double word_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> losses;
  double wall_clock_sec = 0.0;
  int64_t parameter_count = 0;
};

/// Exact full-string match rate after pad truncation.
inline double word_accuracy(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& labels) {
  if (labels.empty()) throw UsageError("word_accuracy: empty label set");
  if (predictions.size() != labels.size())
    throw UsageError("word_accuracy: prediction/label count mismatch");
  size_t correct = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (Charset::lowercase(predictions[i]) == Charset::lowercase(labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// Word accuracy: exact full-string match after pad truncation.
template <class T>
double evaluate(Matrn<T>& model, const Dataset& ds, const TrainConfig& cfg,
                std::vector<std::string>* predictions = nullptr) {
  if (ds.samples.empty()) throw UsageError("evaluate: empty dataset");
  std::mt19937 unused_rng(0);
  std::vector<std::string> preds, labels;
  const size_t bs = static_cast<size_t>(cfg.batch_size);
  for (size_t start = 0; start < ds.samples.size(); start += bs) {
    std::vector<const ImageSample*> ptrs;
    for (size_t i = start; i < std::min(start + bs, ds.samples.size()); ++i)
      ptrs.push_back(&ds.samples[i]);
    Batch<T> batch = make_batch<T>(ptrs, cfg);
    ForwardResult<T> res = model.forward(batch.images, batch.true_lengths, false, unused_rng);
    std::vector<std::string> words = greedy_decode(res.final_logits());
    for (size_t i = 0; i < words.size(); ++i) {
      preds.push_back(words[i]);
      labels.push_back(batch.labels[i]);
      if (predictions) predictions->push_back(words[i]);
    }
  }
  return word_accuracy(preds, labels);
}

/// Seed-text accuracy (argmax of Y0), used by the overfit sanity check.
template <class T>
double evaluate_seed(Matrn<T>& model, const Dataset& ds, const TrainConfig& cfg) {
  std::mt19937 unused_rng(0);
  size_t correct = 0;
  const size_t bs = static_cast<size_t>(cfg.batch_size);
  for (size_t start = 0; start < ds.samples.size(); start += bs) {
    std::vector<const ImageSample*> ptrs;
    for (size_t i = start; i < std::min(start + bs, ds.samples.size()); ++i)
      ptrs.push_back(&ds.samples[i]);
    Batch<T> batch = make_batch<T>(ptrs, cfg);
    ForwardResult<T> res = model.forward(batch.images, batch.true_lengths, false, unused_rng);
    std::vector<std::string> words = greedy_decode(res.seed.logits);
    for (size_t i = 0; i < words.size(); ++i)
      if (words[i] == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

template <class T>
struct TrainOptions {
  double stop_at_val_accuracy = -1.0;  // early stop threshold, <0 disables
  std::function<void(const MetricsRecord&)> on_metrics;
  int log_steps = 0;  // >0: per-step loss printing hook
  std::function<void(int, double)> on_step;
};

/// Full training loop: shuffled minibatches, augmentation, Adam with the
/// configured step decay, per-epoch metrics for train and val splits.
template <class T>
std::vector<MetricsRecord> train_model(Matrn<T>& model, const Dataset& train_ds,
                                       const Dataset& val_ds, const TrainConfig& cfg,
                                       const TrainOptions<T>& opts = {}) {
  if (train_ds.samples.empty()) throw UsageError("train: empty dataset");
  std::mt19937 shuffle_rng(static_cast<uint32_t>(cfg.seed * 7919 + 13));
  std::mt19937 aug_rng(static_cast<uint32_t>(cfg.seed * 104729 + 17));
  std::mt19937 mask_rng(static_cast<uint32_t>(cfg.seed * 1299709 + 19));
  Adam<T> opt(static_cast<T>(cfg.lr));
  auto params = model.params().tensors();
  std::vector<MetricsRecord> records;
  AugmentParams aug;
  aug.strength = static_cast<float>(cfg.aug_strength);

  std::vector<size_t> order(train_ds.samples.size());
  std::iota(order.begin(), order.end(), 0);
  int global_step = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch == cfg.lr_decay_epoch + 1) opt.set_lr(static_cast<T>(cfg.lr * 0.1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::vector<std::pair<std::string, double>> loss_acc;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<ImageSample> augmented;
      std::vector<const ImageSample*> ptrs;
      for (size_t i = start; i < std::min(start + static_cast<size_t>(cfg.batch_size), order.size()); ++i)
        augmented.push_back(augment(train_ds.samples[order[i]], aug_rng, aug));
      for (const auto& s : augmented) ptrs.push_back(&s);
      Batch<T> batch = make_batch<T>(ptrs, cfg);

      Tape<T> tape;
      ForwardResult<T> res = model.forward(batch.images, batch.true_lengths, true, mask_rng);
      LossBreakdown<T> loss = model.total_loss(res, batch.targets);
      check_finite(loss.total, "total loss");
      tape.backward(loss.total);
      opt.step(params);
      model.params().zero_grad();
      ++global_step;
      if (opts.on_step) opts.on_step(global_step, static_cast<double>(loss.total.item()));

      if (loss_acc.empty())
        loss_acc = loss.terms;
      else
        for (size_t i = 0; i < loss.terms.size(); ++i) loss_acc[i].second += loss.terms[i].second;
      ++batches;
    }
    for (auto& [k, v] : loss_acc) v /= std::max(1, batches);

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.split = "val";
    rec.word_accuracy = evaluate(model, val_ds.samples.empty() ? train_ds : val_ds, cfg);
    rec.losses = loss_acc;
    rec.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.parameter_count = model.parameter_count();
    records.push_back(rec);
    if (opts.on_metrics) opts.on_metrics(rec);
    if (opts.stop_at_val_accuracy > 0 && rec.word_accuracy >= opts.stop_at_val_accuracy) break;
  }
  return records;
}

}  // namespace matrn
