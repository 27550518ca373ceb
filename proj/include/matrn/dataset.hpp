#pragma once

#include <random>
#include <string>
#include <vector>

#include "matrn/charset.hpp"
#include "matrn/image.hpp"
#include "matrn/render.hpp"

namespace matrn {

struct Dataset {
  std::vector<ImageSample> samples;
  size_t size() const { return samples.size(); }
};

/// per_word renders of each lexicon word, resized to out_h x out_w x out_c.
/// Fully reproducible from (words, per_word, seed).
Dataset build_dataset(const std::vector<std::string>& words, int per_word, uint64_t seed,
                      int out_h, int out_w, int out_c);

/// Deterministic split; val_fraction of the samples go to the second set.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction, uint64_t seed);

/// Directory layout: images/*.pgm|*.ppm plus labels.tsv (filename<TAB>label).
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// Deterministic word list for desk-scale experiments.
std::vector<std::string> builtin_lexicon(int count, uint64_t seed, int min_len = 3,
                                         int max_len = 8);

}  // namespace matrn
