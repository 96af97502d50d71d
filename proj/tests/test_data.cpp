#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "robunmt/data.hpp"
#include "robunmt/error.hpp"

using namespace robunmt;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("robunmt_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

std::set<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::set<std::string> out;
  for (std::string l; std::getline(in, l);) out.insert(l);
  return out;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST(ToyLanguage, CipherIsBijectionWithAnchorFixedPoints) {
  ToyLanguageSpec spec;
  ToyLanguage lang(spec, 3);
  EXPECT_EQ(lang.anchor_count(), 40u);
  auto l1 = lang.l1_types();
  auto l2 = lang.cipher(l1);
  EXPECT_EQ(std::set<std::string>(l2.begin(), l2.end()).size(), l1.size());
  EXPECT_EQ(lang.decipher(l2), l1);
  for (std::size_t i = 0; i < lang.anchor_count(); ++i) EXPECT_EQ(l1[i], l2[i]);
}

TEST(ToyLanguage, TranslationIsCipherPlusReorder) {
  ToyLanguageSpec spec;
  ToyLanguage lang(spec, 4);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto s = lang.sample_l1(rng);
    EXPECT_GE(s.size(), spec.min_len);
    EXPECT_LE(s.size(), spec.max_len);
    auto t = lang.translate(s);
    EXPECT_EQ(lang.decipher(apply_reorder(t, spec.reorder)), s);  // swap_pairs is an involution
  }
}

TEST(ToyLanguage, ReorderDisplacementAtMostTwo) {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6};
  auto r = apply_reorder(v, ReorderRule::swap_pairs);
  EXPECT_EQ(r, (std::vector<int>{1, 0, 3, 2, 5, 4, 6}));
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_LE(std::abs(r[i] - int(i)), 2);
}

TEST(ToyLanguage, SpecValidationAndRoundTrip) {
  ToyLanguageSpec spec;
  spec.base_vocab = 1;
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.anchor_fraction = 0.9;  // 180 anchors, 20 content words
  EXPECT_THROW(spec.validate(), Error);
  spec = {};
  spec.determinism = 0.75;
  spec.reorder = ReorderRule::none;
  auto back = ToyLanguageSpec::from_map(spec.to_map());
  EXPECT_EQ(back.to_map(), spec.to_map());
}

TEST(GenerateBundle, IdentityPairCopies) {
  auto dir = temp_dir("bundle_identity");
  ToyLanguageSpec spec;
  spec.base_vocab = 30;
  spec.anchor_fraction = 1.0;
  spec.reorder = ReorderRule::none;
  auto b = generate_bundle(spec, 200, 50, 7, dir);
  EXPECT_EQ(read_corpus(b.test_l1), read_corpus(b.test_l2));
}

TEST(GenerateBundle, DefaultSpecCountsAndDisjointness) {
  auto dir = temp_dir("bundle_default");
  ToyLanguageSpec spec;
  auto b = generate_bundle(spec, 20000, 500, 11, dir);
  EXPECT_EQ(line_count(b.train_l1), 20000u);
  EXPECT_EQ(line_count(b.train_l2), 20000u);
  EXPECT_EQ(line_count(b.test_l1), 500u);
  EXPECT_EQ(line_count(b.test_l2), 500u);

  auto tr1 = lines_of(b.train_l1), tr2 = lines_of(b.train_l2);
  for (const auto& f : {b.test_l1, b.test_l2}) {
    for (const auto& l : lines_of(f)) {
      EXPECT_FALSE(tr1.count(l)) << l;
      EXPECT_FALSE(tr2.count(l)) << l;
    }
  }
  // the two training halves are not translations of each other
  ToyLanguage lang(spec, 11);
  auto l1 = read_corpus(b.train_l1);
  for (std::size_t i = 0; i < 2000; ++i) {
    auto t = lang.translate(l1[i]);
    std::string joined;
    for (std::size_t k = 0; k < t.size(); ++k) joined += (k ? " " : "") + t[k];
    EXPECT_FALSE(tr2.count(joined));
  }
  // references are exact cipher images
  auto src = read_corpus(b.test_l1), ref = read_corpus(b.test_l2);
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_EQ(lang.translate(src[i]), ref[i]);

  auto manifest = read_key_values(b.manifest);
  EXPECT_EQ(manifest.at("n_train"), "20000");
  EXPECT_EQ(manifest.at("seed"), "11");
  EXPECT_EQ(ToyLanguageSpec::from_map(manifest).to_map(), spec.to_map());
}

TEST(GenerateBundle, Deterministic) {
  auto d1 = temp_dir("bundle_det1"), d2 = temp_dir("bundle_det2");
  ToyLanguageSpec spec;
  generate_bundle(spec, 300, 20, 5, d1);
  generate_bundle(spec, 300, 20, 5, d2);
  for (const char* f : {"train.l1", "train.l2", "test.l1", "test.l2", "manifest.txt"}) {
    EXPECT_EQ(lines_of(d1 / f), lines_of(d2 / f)) << f;
  }
}

TEST(GenerateBundle, RejectsImpossibleRequests) {
  auto dir = temp_dir("bundle_small");
  ToyLanguageSpec spec;
  spec.base_vocab = 2;
  spec.anchor_fraction = 0.5;
  spec.min_len = spec.max_len = 2;
  try {
    generate_bundle(spec, 1000, 10, 1, dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "vocab-too-small");
  }
  EXPECT_THROW(generate_bundle(ToyLanguageSpec{}, 0, 10, 1, dir), Error);
}

TEST(BuildVocab, UnionOfDisjointCorpora) {
  auto dir = temp_dir("vocab_union");
  write_lines(dir / "x", {"a b c", "d e a"});
  write_lines(dir / "y", {"p q r s", "t u v"});
  Vocabulary v = build_vocab({dir / "x", dir / "y"});
  EXPECT_EQ(v.content_size(), 12u);
  EXPECT_EQ(v.size(), 12u + Vocabulary::num_special);
  EXPECT_EQ(v.token(Vocabulary::num_special), "a");  // most frequent first
}

TEST(BuildVocab, IdenticalCorporaAndRoundTrip) {
  auto dir = temp_dir("vocab_same");
  write_lines(dir / "x", {"a b b", "c"});
  Vocabulary one = build_vocab({dir / "x"});
  Vocabulary two = build_vocab({dir / "x", dir / "x"});
  EXPECT_EQ(one, two);
  one.save(dir / "vocab.txt");
  Vocabulary back = Vocabulary::load(dir / "vocab.txt");
  EXPECT_EQ(back, one);
  for (const auto& t : one.content_tokens()) EXPECT_EQ(back.id(t), one.id(t));
}

TEST(BuildVocab, EmptyCorpusRejected) {
  auto dir = temp_dir("vocab_empty");
  write_lines(dir / "x", {});
  try {
    build_vocab({dir / "x"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "empty-corpus");
  }
}

TEST(BatchStream, SingleSentenceBatches) {
  BatchStream s({{7, 8, 9}, {10}}, 1, 32, Language::l2, 1);
  for (int i = 0; i < 4; ++i) {
    Batch b = s.next();
    ASSERT_EQ(b.rows, 1u);
    EXPECT_EQ(b.lengths[0], s.last_sentences()[0].size() + 2);
    EXPECT_EQ(b.at(0, 0), Vocabulary::lang2);
    EXPECT_EQ(b.at(0, b.lengths[0] - 1), Vocabulary::eos);
  }
}

TEST(BatchStream, EpochCoversEveryLineOnce) {
  std::vector<Sentence> corpus;
  for (int i = 0; i < 103; ++i) corpus.push_back({Vocabulary::num_special + i});
  BatchStream s(corpus, 10, 32, Language::l1, 3);
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::multiset<int> seen;
    for (int k = 0; k < 11; ++k) {
      s.next();
      for (const auto& x : s.last_sentences()) seen.insert(x[0]);
    }
    EXPECT_EQ(seen.size(), 103u);
    EXPECT_EQ(std::set<int>(seen.begin(), seen.end()).size(), 103u);
  }
  EXPECT_EQ(s.epoch(), 1u);
}

TEST(BatchStream, SeekReproducesStream) {
  std::vector<Sentence> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back({Vocabulary::num_special + i});
  BatchStream a(corpus, 7, 32, Language::l1, 9);
  for (int i = 0; i < 9; ++i) a.next();
  BatchStream b(corpus, 7, 32, Language::l1, 9);
  b.seek(a.epoch(), a.cursor());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.next().ids, b.next().ids);
}

TEST(BatchStream, UnknownAndTruncationCounts) {
  auto dir = temp_dir("stream_unk");
  write_lines(dir / "c", {"a b zz", "yy a", "a a a a a a a a"});
  Vocabulary vocab({"a", "b"});
  BatchStream s(dir / "c", vocab, 3, 6, Language::l1, 1);
  EXPECT_EQ(s.unknown_tokens(), 2u);  // zz, yy
  EXPECT_EQ(s.total_tokens(), 13u);
  EXPECT_DOUBLE_EQ(s.unk_rate(), 2.0 / 13.0);
  s.next();
  EXPECT_EQ(s.truncated(), 1u);
  EXPECT_THROW(BatchStream(dir / "missing", vocab, 3, 6, Language::l1, 1), Error);
}

TEST(KeyValues, ParseAndErrors) {
  auto dir = temp_dir("kv");
  write_lines(dir / "c.txt", {"# comment", "", "steps = 10", "mode=both_at"});
  auto kv = read_key_values(dir / "c.txt");
  EXPECT_EQ(kv.at("steps"), "10");
  EXPECT_EQ(kv.at("mode"), "both_at");
  write_lines(dir / "bad.txt", {"steps 10"});
  try {
    read_key_values(dir / "bad.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), "malformed-config");
  }
}
