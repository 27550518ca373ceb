#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "matrn/dataset.hpp"

namespace fs = std::filesystem;

namespace matrn {

Dataset build_dataset(const std::vector<std::string>& words, int per_word, uint64_t seed,
                      int out_h, int out_w, int out_c) {
  Dataset ds;
  ds.samples.reserve(words.size() * static_cast<size_t>(per_word));
  uint64_t style = seed;
  for (const auto& word : words) {
    for (int i = 0; i < per_word; ++i) {
      ImageSample img = render_word(word, style++);
      img = resize(img, out_h, out_w);
      if (img.c != out_c) img = convert_channels(img, out_c);
      ds.samples.push_back(std::move(img));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction, uint64_t seed) {
  std::vector<size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::shuffle(idx.begin(), idx.end(), rng);
  const size_t n_val = static_cast<size_t>(ds.size() * val_fraction);
  Dataset train, val;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (i < n_val)
      val.samples.push_back(ds.samples[idx[i]]);
    else
      train.samples.push_back(ds.samples[idx[i]]);
  }
  return {train, val};
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream labels(fs::path(dir) / "labels.tsv");
  if (!labels) throw IoError("cannot write labels.tsv in " + dir);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << (ds.samples[i].c == 1 ? ".pgm" : ".ppm");
    write_pnm((fs::path(dir) / "images" / name.str()).string(), ds.samples[i]);
    labels << "images/" << name.str() << "\t" << ds.samples[i].label << "\n";
  }
}

Dataset load_dataset(const std::string& dir) {
  const fs::path labels_path = fs::path(dir) / "labels.tsv";
  std::ifstream labels(labels_path);
  if (!labels) throw IoError("cannot open " + labels_path.string());
  Dataset ds;
  std::string line;
  int line_no = 0;
  while (std::getline(labels, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw IoError(labels_path.string() + ":" + std::to_string(line_no) +
                    ": expected 'filename<TAB>label'");
    const std::string file = line.substr(0, tab);
    const std::string label = Charset::lowercase(line.substr(tab + 1));
    if (!Charset::valid_label(label))
      throw IoError(labels_path.string() + ":" + std::to_string(line_no) + ": invalid label '" +
                    label + "'");
    ImageSample img = read_pnm((fs::path(dir) / file).string());
    img.label = label;
    ds.samples.push_back(std::move(img));
  }
  return ds;
}

std::vector<std::string> builtin_lexicon(int count, uint64_t seed, int min_len, int max_len) {
  static const char* kConsonants = "bcdfghjklmnprstvwz";
  static const char* kVowels = "aeiou";
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::vector<std::string> words;
  std::vector<std::string> seen;
  while (static_cast<int>(words.size()) < count) {
    const int len = min_len + static_cast<int>(rng() % static_cast<uint32_t>(max_len - min_len + 1));
    std::string w;
    bool vowel = (rng() % 2) == 0;
    for (int i = 0; i < len; ++i) {
      if (rng() % 8 == 0) {
        w.push_back(static_cast<char>('0' + rng() % 10));  // occasional digit
      } else if (vowel) {
        w.push_back(kVowels[rng() % 5]);
      } else {
        w.push_back(kConsonants[rng() % 18]);
      }
      vowel = !vowel;
    }
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return words;
}

}  // namespace matrn
