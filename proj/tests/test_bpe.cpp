// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fnmt/bpe/bpe.hpp"
#include "support/oracles.hpp"
#include "support/random_text.hpp"

namespace fnmt {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "fnmt_test_bpe";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<text::Tokens> low_lower() {
  std::vector<text::Tokens> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back({"low"});
  for (int i = 0; i < 2; ++i) corpus.push_back({"lower"});
  return corpus;
}

std::vector<std::pair<std::vector<std::string>, std::size_t>> initial_words(
    const std::vector<text::Tokens>& corpus) {
  std::vector<std::pair<std::vector<std::string>, std::size_t>> out;
  for (const auto& [w, n] : word_counts(corpus)) {
    auto sym = text::utf8_chars(w);
    sym.back() += "</w>";
    out.emplace_back(sym, n);
  }
  return out;
}

TEST(VocabularyTest, ReservedIdsAndOrdering) {
  auto v = Vocabulary::build({{"b", "a", "b", "c", "c", "c"}});
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kBos), "<s>");
  EXPECT_EQ(v.token(Vocabulary::kEos), "</s>");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.id("c"), 4);
  EXPECT_EQ(v.id("b"), 5);
  EXPECT_EQ(v.id("a"), 6);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_THROW(v.token(99), VocabError);
}

TEST(VocabularyTest, ThresholdDropsRareTokens) {
  auto v = Vocabulary::build({{"a", "a", "b"}}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
}

TEST(VocabularyTest, SaveLoadRoundtrip) {
  auto v = Vocabulary::build({{"x", "y", "y", "zé"}});
  const auto p = temp_path("vocab.tsv");
  v.save(p);
  EXPECT_EQ(Vocabulary::load(p), v);
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens()), v);
}

TEST(VocabularyTest, MalformedLineIsParseError) {
  const auto p = temp_path("bad_vocab.tsv");
  std::ofstream(p) << "a\t3\nno-frequency\n";
  try {
    Vocabulary::load(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(VocabularyTest, DecodeDropsSpecials) {
  auto v = Vocabulary::build({{"hi", "there"}});
  std::vector<int> ids{Vocabulary::kBos, v.id("hi"), v.id("there"), Vocabulary::kEos,
                       Vocabulary::kPad};
  EXPECT_EQ(v.decode(ids), (text::Tokens{"hi", "there"}));
}

TEST(LearnBpeTest, ZeroMergesLeavesCharacters) {
  auto m = learn_bpe(low_lower(), 0);
  EXPECT_TRUE(m.merges().empty());
  EXPECT_EQ(m.segment("low"), (std::vector<std::string>{"l", "o", "w</w>"}));
  EXPECT_EQ(m.apply({"low"}), (text::Tokens{"l@@", "o@@", "w"}));
}

TEST(LearnBpeTest, FirstMergeIsMostFrequentPair) {
  auto m = learn_bpe(low_lower(), 2);
  const auto want = oracle::learn_bpe(initial_words(low_lower()), 2, 2);
  ASSERT_EQ(m.merges().size(), 2u);
  EXPECT_EQ(m.merges(), want);
  EXPECT_EQ(m.merges()[0], (SymbolPair{"l", "o"}));
  EXPECT_EQ(m.merges()[1], (SymbolPair{"lo", "w</w>"}));
}

TEST(LearnBpeTest, MatchesBruteForceOnRandomCorpora) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<text::Tokens> corpus;
    for (int i = 0; i < 20; ++i) corpus.push_back({testing::random_word(rng)});
    auto m = learn_bpe(corpus, 40);
    EXPECT_EQ(m.merges(), oracle::learn_bpe(initial_words(corpus), 40, 2)) << "seed " << seed;
  }
}

TEST(LearnBpeTest, StopsWhenPairsBecomeRare) {
  auto m = learn_bpe({{"ab", "cd"}}, 10);
  EXPECT_TRUE(m.merges().empty());
  LearnBpeOptions o;
  o.min_frequency = 1;
  EXPECT_EQ(learn_bpe({{"ab", "cd"}}, 10, o).merges().size(), 2u);
}

TEST(LearnBpeTest, DeterministicMergesFile) {
  const auto corpus = testing::random_corpus(50, 7);
  const auto a = temp_path("merges_a.txt"), b = temp_path("merges_b.txt");
  learn_bpe(corpus, 30).save(a);
  learn_bpe(corpus, 30).save(b);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(BpeModel::load(a).merges(), learn_bpe(corpus, 30).merges());
}

TEST(LearnBpeTest, EmptyCorpusIsInputError) {
  EXPECT_THROW(learn_bpe({}, 5), InputError);
}

TEST(ApplyBpeTest, ReplayOfMergeList) {
  auto m = learn_bpe(low_lower(), 10);
  const auto replay = oracle::replay_merges({"l", "o", "w", "e", "r</w>"}, m.merges());
  EXPECT_EQ(m.segment("lower"), replay);
}

TEST(ApplyBpeTest, SegmentMatchesReplayOnRandomWords) {
  const auto corpus = testing::random_corpus(200, 3);
  auto m = learn_bpe(corpus, 100);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const auto w = testing::random_word(rng);
    auto sym = text::utf8_chars(w);
    sym.back() += "</w>";
    EXPECT_EQ(m.segment(w), oracle::replay_merges(sym, m.merges())) << w;
  }
}

TEST(ApplyBpeTest, WholeWordInVocabIsNotSplit) {
  BpeModel m(std::vector<SymbolPair>{{"u", "n"}});
  Vocabulary v;
  v.add("unbelievable");
  EXPECT_EQ(m.apply({"unbelievable"}, &v), (text::Tokens{"unbelievable"}));
}

TEST(ApplyBpeTest, NonFinalPiecesCarryMarker) {
  BpeModel m(std::vector<SymbolPair>{{"u", "n"}, {"a", "b"}, {"ab", "l"}, {"abl", "e</w>"}, {"b", "e"}, {"l", "i"},
              {"be", "li"}, {"beli", "e"}, {"belie", "v"}});
  const auto pieces = m.apply({"unbelievable"});
  EXPECT_EQ(pieces, (text::Tokens{"un@@", "believ@@", "able"}));
  EXPECT_EQ(strip_bpe(pieces), (text::Tokens{"unbelievable"}));
}

TEST(ApplyBpeTest, MissingPiecesAreSplitToVocabulary) {
  BpeModel m(std::vector<SymbolPair>{{"a", "b"}, {"ab", "c</w>"}});
  Vocabulary v;
  v.add("a@@");
  v.add("b@@");
  v.add("c");
  EXPECT_EQ(m.apply({"abc"}, &v), (text::Tokens{"a@@", "b@@", "c"}));
  v.add("ab@@");
  EXPECT_EQ(m.apply({"abc"}, &v), (text::Tokens{"ab@@", "c"}));
  // 'x' has no producing merge and is not in the vocabulary.
  EXPECT_EQ(m.apply({"xc"}, &v), (text::Tokens{"<unk>@@", "c"}));
}

TEST(ApplyBpeTest, SubwordCountsNeverShrink) {
  const auto corpus = testing::random_corpus(100, 9);
  auto m = learn_bpe(corpus, 60);
  for (const auto& s : corpus) {
    for (const auto& w : s) EXPECT_GE(m.apply({w}).size(), 1u);
    EXPECT_GE(m.apply(s).size(), s.size());
  }
}

TEST(StripBpeTest, Examples) {
  EXPECT_EQ(strip_bpe({"un@@", "believ@@", "able"}), (text::Tokens{"unbelievable"}));
  EXPECT_EQ(strip_bpe({"plain", "words"}), (text::Tokens{"plain", "words"}));
}

TEST(StripBpeTest, DanglingMarkerWarns) {
  Warnings w;
  EXPECT_EQ(strip_bpe({"a", "b@@"}, "@@", &w), (text::Tokens{"a", "b"}));
  EXPECT_EQ(w.size(), 1u);
}

TEST(StripBpeTest, RoundtripOnRandomSentences) {
  const auto train = testing::random_corpus(300, 21);
  auto m = learn_bpe(train, 150);
  auto vocab = build_subword_vocab(m, train, 2);
  const auto test = testing::random_corpus(1000, 22);
  for (const auto& s : test) {
    EXPECT_EQ(strip_bpe(m.apply(s)), s);
    const auto filtered = m.apply(s, &vocab);
    for (const auto& p : filtered)
      EXPECT_TRUE(vocab.contains(p) || p == "<unk>" || p == "<unk>@@") << p;
  }
}

}  // namespace
}  // namespace fnmt
