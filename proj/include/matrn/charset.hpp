#pragma once

#include <string>
#include <vector>

#include "matrn/errors.hpp"

namespace matrn {

/// 37 classes: digits 0-9 (indices 0-9), letters a-z (10-35), pad (36).
class Charset {
 public:
  static constexpr int kNumClasses = 37;
  static constexpr int kPadIndex = 36;

  static int index_of(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'z') return 10 + (c - 'a');
    if (c >= 'A' && c <= 'Z') return 10 + (c - 'A');
    throw CharsetError(std::string("character '") + c + "' not in charset");
  }

  static char symbol_of(int idx) {
    if (idx >= 0 && idx <= 9) return static_cast<char>('0' + idx);
    if (idx >= 10 && idx <= 35) return static_cast<char>('a' + idx - 10);
    if (idx == kPadIndex) return '\0';
    throw CharsetError("class index " + std::to_string(idx) + " out of range");
  }

  static bool valid_label(const std::string& s) {
    for (char c : s) {
      if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')))
        return false;
    }
    return !s.empty();
  }

  static std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
  }
};

/// Fixed-length padded index sequence.
struct TokenSequence {
  std::vector<int> indices;  // length T
  int true_length = 0;
};

inline TokenSequence encode_label(const std::string& label, int t_max) {
  const std::string s = Charset::lowercase(label);
  if (static_cast<int>(s.size()) > t_max - 1)
    throw LabelError("label '" + s + "' longer than T-1 = " + std::to_string(t_max - 1));
  TokenSequence seq;
  seq.indices.assign(static_cast<size_t>(t_max), Charset::kPadIndex);
  for (size_t i = 0; i < s.size(); ++i) seq.indices[i] = Charset::index_of(s[i]);
  seq.true_length = static_cast<int>(s.size());
  return seq;
}

inline std::string decode_label(const TokenSequence& seq) {
  std::string out;
  for (int idx : seq.indices) {
    if (idx == Charset::kPadIndex) break;
    out.push_back(Charset::symbol_of(idx));
  }
  return out;
}

/// Decode an index vector directly; stops at the first pad.
inline std::string decode_indices(const std::vector<int>& idx) {
  std::string out;
  for (int i : idx) {
    if (i == Charset::kPadIndex) break;
    out.push_back(Charset::symbol_of(i));
  }
  return out;
}

}  // namespace matrn
