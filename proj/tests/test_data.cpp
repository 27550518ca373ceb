#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "matrn/dataset.hpp"

using namespace matrn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("matrn_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("encode maps digits and letters to their class indices") {
  TokenSequence seq = encode_label("ab7", 12);
  REQUIRE(seq.indices.size() == 12);
  CHECK(seq.indices[0] == 10);
  CHECK(seq.indices[1] == 11);
  CHECK(seq.indices[2] == 7);
  for (size_t i = 3; i < 12; ++i) CHECK(seq.indices[i] == Charset::kPadIndex);
  CHECK(seq.true_length == 3);
}

TEST_CASE("encode is case-insensitive and rejects out-of-charset input") {
  CHECK(encode_label("AbC", 8).indices == encode_label("abc", 8).indices);
  CHECK_THROWS_AS(encode_label("a b", 8), CharsetError);
  CHECK_THROWS_AS(Charset::index_of('!'), CharsetError);
}

TEST_CASE("labels longer than T-1 are rejected") {
  CHECK_THROWS_AS(encode_label("abcdefgh", 8), LabelError);
  CHECK_NOTHROW(encode_label("abcdefg", 8));
}

TEST_CASE("encode/decode round-trips random labels") {
  std::mt19937 rng(7);
  const std::string alphabet = "0123456789abcdefghijklmnopqrstuvwxyz";
  for (int trial = 0; trial < 200; ++trial) {
    int len = 1 + static_cast<int>(rng() % 11);
    std::string label;
    for (int i = 0; i < len; ++i) label.push_back(alphabet[rng() % alphabet.size()]);
    CHECK(decode_label(encode_label(label, 12)) == label);
  }
}

TEST_CASE("rendering is deterministic per (text, seed)") {
  ImageSample a = render_word("hello", 42);
  ImageSample b = render_word("hello", 42);
  CHECK(a.pixels == b.pixels);
  ImageSample c = render_word("hello", 43);
  CHECK(a.pixels != c.pixels);
  ImageSample d = render_word("hallo", 42);
  CHECK(a.pixels != d.pixels);
}

TEST_CASE("rendered images stay in [0,1] and carry ordered char boxes") {
  for (uint64_t seed : {0ull, 1ull, 99ull}) {
    ImageSample img = render_word("abc123", seed);
    CHECK(img.char_boxes.size() == 6);
    for (float v : img.pixels) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
    for (size_t i = 0; i < img.char_boxes.size(); ++i) {
      CHECK(img.char_boxes[i][0] < img.char_boxes[i][1]);
      if (i) CHECK(img.char_boxes[i - 1][1] <= img.char_boxes[i][0]);
    }
  }
}

TEST_CASE("augment with strength zero is the identity") {
  ImageSample img = render_word("xyz", 3);
  std::mt19937 rng(1);
  AugmentParams p;
  p.strength = 0.f;
  ImageSample out = augment(img, rng, p);
  CHECK(out.pixels == img.pixels);
  CHECK(out.label == img.label);
}

TEST_CASE("augment is reproducible and keeps range and label") {
  ImageSample img = render_word("word", 5);
  std::mt19937 r1(9), r2(9), r3(10);
  ImageSample a = augment(img, r1);
  ImageSample b = augment(img, r2);
  ImageSample c = augment(img, r3);
  CHECK(a.pixels == b.pixels);
  CHECK(a.pixels != c.pixels);
  CHECK(a.label == "word");
  for (float v : a.pixels) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("resize produces the requested geometry") {
  ImageSample img = render_word("resize", 0);
  ImageSample out = resize(img, 16, 64);
  CHECK(out.h == 16);
  CHECK(out.w == 64);
  CHECK(out.c == img.c);
  CHECK(out.pixels.size() == 16u * 64u * static_cast<size_t>(img.c));
  CHECK(out.label == img.label);
}

TEST_CASE("pgm and ppm files round-trip") {
  fs::path dir = temp_dir("pnm");
  ImageSample gray = resize(render_word("io", 1), 16, 64);
  write_pnm((dir / "g.pgm").string(), gray);
  ImageSample gback = read_pnm((dir / "g.pgm").string());
  CHECK(gback.h == gray.h);
  CHECK(gback.w == gray.w);
  CHECK(gback.c == 1);
  double worst = 0;
  for (size_t i = 0; i < gray.pixels.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(gray.pixels[i] - gback.pixels[i])));
  CHECK(worst <= 1.0 / 255.0 + 1e-6);

  ImageSample rgb = convert_channels(gray, 3);
  write_pnm((dir / "c.ppm").string(), rgb);
  ImageSample cback = read_pnm((dir / "c.ppm").string());
  CHECK(cback.c == 3);
  CHECK(cback.pixels.size() == rgb.pixels.size());
}

TEST_CASE("reading a missing file is an io error") {
  CHECK_THROWS_AS(read_pnm("/nonexistent/path/x.pgm"), IoError);
}

TEST_CASE("dataset build is reproducible and save/load round-trips") {
  std::vector<std::string> words = {"cat", "dog", "bird"};
  Dataset a = build_dataset(words, 2, 11, 16, 64, 1);
  Dataset b = build_dataset(words, 2, 11, 16, 64, 1);
  REQUIRE(a.size() == 6);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].pixels == b.samples[i].pixels);
    CHECK(a.samples[i].label == b.samples[i].label);
  }

  fs::path dir = temp_dir("ds");
  save_dataset(a, dir.string());
  Dataset back = load_dataset(dir.string());
  REQUIRE(back.size() == a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(back.samples[i].label == a.samples[i].label);
    CHECK(back.samples[i].h == 16);
    CHECK(back.samples[i].w == 64);
  }
}

TEST_CASE("malformed labels.tsv reports the offending line") {
  fs::path dir = temp_dir("bad");
  Dataset ds = build_dataset({"ok"}, 1, 0, 16, 64, 1);
  save_dataset(ds, dir.string());
  std::ofstream f(dir / "labels.tsv", std::ios::app);
  f << "no_tab_on_this_line\n";
  f.close();
  try {
    load_dataset(dir.string());
    FAIL("expected IoError");
  } catch (const IoError& e) {
    std::string msg = e.what();
    CHECK(msg.find("labels.tsv") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
}

TEST_CASE("split is deterministic and disjoint") {
  Dataset ds = build_dataset(builtin_lexicon(20, 1), 3, 2, 16, 64, 1);
  auto [tr1, va1] = split_dataset(ds, 0.25, 5);
  auto [tr2, va2] = split_dataset(ds, 0.25, 5);
  CHECK(tr1.size() == tr2.size());
  CHECK(va1.size() == va2.size());
  CHECK(tr1.size() + va1.size() == ds.size());
  CHECK(va1.size() == ds.size() / 4);
  for (size_t i = 0; i < va1.size(); ++i) CHECK(va1.samples[i].label == va2.samples[i].label);
}

TEST_CASE("builtin lexicon gives unique valid words within length bounds") {
  std::vector<std::string> words = builtin_lexicon(100, 3, 3, 8);
  REQUIRE(words.size() == 100);
  std::set<std::string> seen(words.begin(), words.end());
  CHECK(seen.size() == 100);
  for (const auto& w : words) {
    CHECK(w.size() >= 3);
    CHECK(w.size() <= 8);
    CHECK(Charset::valid_label(w));
  }
  CHECK(builtin_lexicon(100, 3, 3, 8) == words);
}
