// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fnmt/eval/bleu.hpp"
#include "fnmt/eval/decoding.hpp"
#include "support/random_text.hpp"
#include "support/tasks.hpp"

namespace fnmt {
namespace {

text::Tokens toks(const std::string& s) { return text::split_ws(s); }

TEST(BleuTest, HandCountedFixture) {
  const auto r = corpus_bleu({toks("the cat sat on the mat"), toks("a dog runs")},
                             {toks("the cat sat on a mat"), toks("the dog runs fast")});
  EXPECT_EQ(r.stats.matches, (std::array<std::size_t, 4>{7, 4, 2, 1}));
  EXPECT_EQ(r.stats.totals, (std::array<std::size_t, 4>{9, 7, 5, 3}));
  EXPECT_EQ(r.stats.hyp_len, 9u);
  EXPECT_EQ(r.stats.ref_len, 10u);
  const double want = 100.0 * std::exp(1.0 - 10.0 / 9.0) * std::pow(56.0 / 945.0, 0.25);
  EXPECT_NEAR(r.score, want, 1e-6);
  EXPECT_NEAR(r.precisions[0], 700.0 / 9.0, 1e-9);
}

TEST(BleuTest, IdentityIsHundred) {
  const auto corpus = testing::random_corpus(50, 3);
  EXPECT_NEAR(corpus_bleu(corpus, corpus).score, 100.0, 1e-9);
  EXPECT_NEAR(corpus_bleu({toks("a b c d e")}, {toks("a b c d e")}).score, 100.0, 1e-9);
}

TEST(BleuTest, NoFourGramMatchIsZero) {
  EXPECT_EQ(corpus_bleu({toks("a b c d x e f g h")}, {toks("a b c y d e f g z h")}).score, 0.0);
  EXPECT_EQ(corpus_bleu({toks("")}, {toks("a b")}).score, 0.0);
}

TEST(BleuTest, PermutationInvariant) {
  auto hyps = testing::random_corpus(30, 4), refs = testing::random_corpus(30, 5);
  for (std::size_t i = 0; i < hyps.size(); ++i)
    std::copy_n(refs[i].begin(), std::min(refs[i].size(), hyps[i].size()) / 2, hyps[i].begin());
  const double base = corpus_bleu(hyps, refs).score;
  EXPECT_GT(base, 0.0);
  std::mt19937_64 rng(6);
  std::vector<std::size_t> order(hyps.size());
  std::iota(order.begin(), order.end(), 0);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<text::Tokens> h, r;
    for (auto i : order) h.push_back(hyps[i]), r.push_back(refs[i]);
    EXPECT_DOUBLE_EQ(corpus_bleu(h, r).score, base);
  }
}

TEST(BleuTest, Errors) {
  EXPECT_THROW(corpus_bleu({}, {}), InputError);
  EXPECT_THROW(corpus_bleu({toks("a")}, {toks("a"), toks("b")}), InputError);
}

TEST(BleuTest, FormatLine) {
  const auto r = corpus_bleu({toks("a b c d e")}, {toks("a b c d e")});
  EXPECT_EQ(r.format().rfind("BLEU = 100.00, 100.0/100.0/100.0/100.0 (BP=1.000", 0), 0u);
}

FactoredTransformer<double> toy_model(std::size_t target_vocab, std::uint64_t seed,
                                      std::size_t max_len = 16) {
  auto c = testing::variant_config({Architecture::OneEncoder, Combination::Sum}, 9, 7,
                                   target_vocab, 8, 1, 2);
  c.max_len = max_len;
  FactoredTransformer<double> m(c, seed);
  // Sharpen the output layer so the distributions are far from uniform.
  for (auto& v : m.parameters().find("output.weight")->data()) v *= 6.0;
  return m;
}

const std::vector<std::vector<int>> kSource = {{4, 5, 6, 7}, {4, 4, 5, 6}};

TEST(DecodeTest, BeamOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto m = toy_model(12, seed);
    const auto enc = encode_sentence(m, kSource);
    const auto greedy = greedy_decode(m, enc, 10);
    const auto beam = beam_search(m, enc, DecodeOptions{1, 10, 1.0});
    EXPECT_EQ(beam.tokens, greedy.tokens) << seed;

    // Greedy, spelled out against decode_step.
    std::vector<int> prefix{Vocabulary::kBos}, out;
    while (out.size() < 10) {
      Graph<double> g(false);
      const auto logits = m.decode_step(g, enc, prefix);
      int best = -1;
      for (int j = 0; j < 12; ++j) {
        if (j == Vocabulary::kPad || j == Vocabulary::kBos) continue;
        if (best < 0 || logits(prefix.size() - 1, j) > logits(prefix.size() - 1, best)) best = j;
      }
      out.push_back(best);
      prefix.push_back(best);
      if (best == Vocabulary::kEos) break;
    }
    EXPECT_EQ(greedy.tokens, out) << seed;
  }
}

TEST(DecodeTest, BeamNeverScoresBelowGreedy) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto m = toy_model(12, seed);
    const auto enc = encode_sentence(m, kSource);
    for (double alpha : {0.0, 1.0}) {
      const auto greedy = greedy_decode(m, enc, 10);
      const auto beam = beam_search(m, enc, DecodeOptions{4, 10, alpha});
      EXPECT_GE(beam.score(alpha), greedy.score(alpha) - 1e-12) << seed;
    }
  }
}

/// Log-probability of `tokens` under the model, token by token.
double sequence_log_prob(const FactoredTransformer<double>& m, const EncoderOutput<double>& enc,
                         const std::vector<int>& tokens) {
  std::vector<int> prefix{Vocabulary::kBos};
  double lp = 0.0;
  for (int t : tokens) {
    Graph<double> g(false);
    const auto logits = m.decode_step(g, enc, prefix);
    const auto row = log_probs(logits.ptr() + (prefix.size() - 1) * logits.cols(), logits.cols());
    lp += row[static_cast<std::size_t>(t)];
    prefix.push_back(t);
  }
  return lp;
}

TEST(DecodeTest, ExhaustiveBeamMatchesEnumeration) {
  // Seven ids, five of them generable: UNK, EOS and three words.
  const std::size_t V = 7, max_len = 3;
  std::vector<int> generable;
  for (int j = 0; j < static_cast<int>(V); ++j)
    if (is_generable(j)) generable.push_back(j);
  ASSERT_EQ(generable.size(), 5u);

  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto m = toy_model(V, 100 + seed);
    const auto enc = encode_sentence(m, kSource);
    for (double alpha : {0.0, 1.0}) {
      std::vector<int> best_seq;
      double best = -1e300;
      std::vector<std::vector<int>> frontier = {{}};
      for (std::size_t len = 1; len <= max_len; ++len) {
        std::vector<std::vector<int>> next;
        for (const auto& p : frontier)
          for (int t : generable) {
            auto s = p;
            s.push_back(t);
            if (t == Vocabulary::kEos || len == max_len) {
              const double score = sequence_log_prob(m, enc, s) / std::pow(double(len), alpha);
              if (score > best) best = score, best_seq = s;
            } else {
              next.push_back(s);
            }
          }
        frontier = std::move(next);
      }
      const auto beam = beam_search(m, enc, DecodeOptions{125, max_len, alpha});
      EXPECT_EQ(beam.tokens, best_seq) << "seed " << seed << " alpha " << alpha;
      EXPECT_NEAR(beam.score(alpha), best, 1e-9);
    }
  }
}

TEST(DecodeTest, HypothesisInvariants) {
  const auto m = toy_model(12, 3);
  const auto enc = encode_sentence(m, kSource);
  const auto h = beam_search(m, enc, DecodeOptions{4, 6, 1.0});
  EXPECT_TRUE(h.finished);
  EXPECT_LE(h.tokens.size(), 6u);
  if (h.tokens.size() < 6) {
    EXPECT_EQ(h.tokens.back(), Vocabulary::kEos);
  }
  EXPECT_NEAR(h.log_prob, sequence_log_prob(m, enc, h.tokens), 1e-9);
  const auto out = h.output();
  EXPECT_EQ(std::count(out.begin(), out.end(), Vocabulary::kEos), 0);
}

TEST(DecodeTest, EmptySourceWarns) {
  const auto m = toy_model(12, 3);
  Warnings w;
  const auto h = translate(m, {{}, {}}, DecodeOptions{}, &w);
  EXPECT_TRUE(h.output().empty());
  EXPECT_EQ(w.size(), 1u);
}

TEST(DecodeTest, DeterministicAndValidated) {
  const auto m = toy_model(12, 4);
  const auto a = translate(m, kSource, DecodeOptions{4, 12, 1.0});
  const auto b = translate(m, kSource, DecodeOptions{4, 12, 1.0});
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.log_prob, b.log_prob);
  EXPECT_THROW(translate(m, kSource, DecodeOptions{0, 12, 1.0}), ConfigError);
}

TEST(DecodeTest, LengthCappedByModel) {
  const auto m = toy_model(12, 5, 6);
  for (std::size_t beam : {1u, 3u}) {
    const auto h = translate(m, kSource, DecodeOptions{beam, 50, 1.0});
    EXPECT_LE(h.tokens.size(), 5u);
  }
}

}  // namespace
}  // namespace fnmt
