// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "fnmt/model/checkpoint.hpp"
#include "fnmt/model/grad_suite.hpp"
#include "fnmt/train/loss.hpp"
#include "support/reduction.hpp"
#include "support/tasks.hpp"

namespace fnmt {
namespace {

namespace fs = std::filesystem;
using testing::all_variants;
using testing::variant_config;
using TD = Tensor<double>;

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "fnmt_test_model";
  fs::create_directories(dir);
  return dir / name;
}

ModelConfig small_config() {
  ModelConfig c;
  c.factors = {{"word", 12, 8}, {"lemma", 9, 8}};
  c.target_vocab = 10;
  c.layers_enc = c.layers_dec = 2;
  c.heads = 2;
  c.d_model = 8;
  c.d_ffn = 16;
  c.dropout = 0.0;
  c.max_len = 16;
  return c;
}

std::string message_of(const ModelConfig& c) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ModelConfigTest, SumNeedsEqualDims) {
  auto c = small_config();
  c.factors[1].embed_dim = 4;
  EXPECT_NE(message_of(c).find("must share the same dimensionality"), std::string::npos);
}

TEST(ModelConfigTest, OneEncoderConcatMustMatchDecoderWidth) {
  auto c = small_config();
  c.combine = Combination::Concat;
  c.factors[0].embed_dim = 6;
  c.factors[1].embed_dim = 4;
  EXPECT_NE(message_of(c).find("decoder embedding size"), std::string::npos);
  c.factors[1].embed_dim = 2;
  EXPECT_EQ(message_of(c), "");
}

TEST(ModelConfigTest, SubwordTagsRejectedWithNEncoders) {
  auto c = small_config();
  c.arch = Architecture::NEncoders;
  c.factors.push_back({std::string(kSubwordTagFactor), 6, 8});
  EXPECT_NE(message_of(c).find("not compatible with the N-encoders"), std::string::npos);
  c.arch = Architecture::OneEncoder;
  EXPECT_EQ(message_of(c), "");
}

TEST(ModelConfigTest, HeadsAndParity) {
  auto c = small_config();
  c.heads = 3;
  EXPECT_NE(message_of(c).find("divisible"), std::string::npos);
  c = small_config();
  c.heads = 1;
  c.d_model = 7;
  for (auto& f : c.factors) f.embed_dim = 7;
  EXPECT_NE(message_of(c).find("odd"), std::string::npos);
  c = small_config();
  c.factors[1].name = "word";
  EXPECT_NE(message_of(c).find("twice"), std::string::npos);
}

TEST(ModelConfigTest, TextRoundtrip) {
  auto c = small_config();
  c.arch = Architecture::NEncoders;
  c.combine = Combination::Concat;
  c.dropout = 0.3;
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text("colour=blue\n"), ParseError);
  EXPECT_THROW(ModelConfig::from_text("heads=many\n"), ParseError);
}

TEST(CombineTest, Examples) {
  Graph<double> g(false);
  const TD a({1, 2}, std::vector<double>{1, 2}), b({1, 2}, std::vector<double>{3, 4}),
      c({1, 1}, std::vector<double>{3});
  const auto s = combine(g, {a, b}, Combination::Sum);
  EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()), (std::vector<double>{4, 6}));
  const auto k = combine(g, {a, c}, Combination::Concat);
  EXPECT_EQ(k.shape(), (Shape{1, 3}));
  EXPECT_EQ(std::vector<double>(k.data().begin(), k.data().end()), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(combine(g, {a, c}, Combination::Sum), ConfigError);
  EXPECT_THROW(combine<double>(g, {}, Combination::Sum), ConfigError);
}

TEST(CombineTest, SumOfCopiesIsScaled) {
  std::mt19937_64 rng(5);
  Graph<double> g(false);
  const TD v = TD::uniform({3, 5}, 1.0, rng);
  const auto s = combine(g, {v, v, v}, Combination::Sum);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(s.data()[i], 3.0 * v.data()[i]);
}

TEST(PositionalEncodingTest, KnownValues) {
  const auto pe = positional_encoding<double>(3, 6);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pe(0, i), i % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe(1, 0), 0.841471, 1e-6);
  EXPECT_NEAR(pe(2, 3), std::cos(2.0 / std::pow(10000.0, 2.0 / 6.0)), 1e-12);
  EXPECT_THROW(positional_encoding<double>(3, 5), ConfigError);
}

TEST(PositionalEncodingTest, AddedOnceAfterCombination) {
  const auto c = small_config();
  FactoredTransformer<double> m(c, 7);
  const std::vector<std::vector<int>> src = {{4, 5, 6, 7}, {4, 4, 5, 8}};
  const auto batch = SourceBatch::single(src);
  Graph<double> g(false);
  const auto enc = m.encode(g, batch, ForwardContext{});

  auto run = [&](bool per_factor) {
    std::vector<TD> parts;
    for (std::size_t i = 0; i < 2; ++i) {
      TD x = m.embed_factor(g, i, src[i]);
      if (per_factor) x = add(g, x, positional_encoding<double>(4, 8));
      parts.push_back(x);
    }
    TD x = combine(g, parts, Combination::Sum);
    if (!per_factor) x = add(g, x, positional_encoding<double>(4, 8));
    return m.run_encoder_stack(g, 0, x, 1, 4, AttentionMask{batch.padding, false}, ForwardContext{});
  };
  const auto post = run(false), pre = run(true);
  double same = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    same = std::max(same, std::abs(post.data()[i] - enc.states.data()[i]));
    diff = std::max(diff, std::abs(pre.data()[i] - enc.states.data()[i]));
  }
  EXPECT_EQ(same, 0.0);
  EXPECT_GT(diff, 1e-3);
}

TEST(FactoredModelTest, ReductionToBaseline) {
  const auto r = testing::reduction_max_diff(11, 20);
  EXPECT_LT(r.vs_baseline, 1e-6);
  EXPECT_LT(r.vs_reference, 1e-6);
}

TEST(FactoredModelTest, ShapeLawOverRandomConfigs) {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 12; ++rep) {
    ModelConfig c;
    c.arch = rng() % 2 ? Architecture::NEncoders : Architecture::OneEncoder;
    c.combine = rng() % 2 ? Combination::Concat : Combination::Sum;
    c.heads = 1 + rng() % 2;
    c.layers_enc = c.layers_dec = 1;
    c.d_ffn = 8;
    c.dropout = 0.0;
    c.target_vocab = 6;
    const std::size_t n = 1 + rng() % 3;
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t d = 4 * (1 + rng() % 3);
      c.factors.push_back({"f" + std::to_string(i), 5 + rng() % 4, d});
      total += d;
    }
    if (c.combine == Combination::Sum) {
      c.d_model = c.factors[0].embed_dim;
      for (auto& f : c.factors) f.embed_dim = c.d_model;
    } else {
      c.d_model = total;
    }
    FactoredTransformer<double> m(c, rng());
    std::vector<std::vector<int>> src(n, std::vector<int>{4, 4, 4});
    Graph<double> g(false);
    const auto enc = m.encode(g, SourceBatch::single(src), ForwardContext{});
    const std::size_t want = c.combine == Combination::Sum ? c.d_model : total;
    EXPECT_EQ(enc.dim(), want) << c.to_text();
    EXPECT_EQ(enc.states.rows(), 3u);
  }
}

TEST(FactoredModelTest, NEncodersConcatDoublesWidth) {
  auto c = small_config();
  c.arch = Architecture::NEncoders;
  c.combine = Combination::Concat;
  FactoredTransformer<double> m(c, 1);
  Graph<double> g(false);
  const auto enc = m.encode(g, SourceBatch::single({{4, 5}, {4, 6}}), ForwardContext{});
  EXPECT_EQ(enc.dim(), 16u);
  EXPECT_EQ(m.parameters().find("tgt_embed")->shape(), (Shape{10, 16}));
}

TEST(FactoredModelTest, OneEncoderConcatUnevenDims) {
  auto c = small_config();
  c.combine = Combination::Concat;
  c.factors[0].embed_dim = 6;
  c.factors[1].embed_dim = 2;
  FactoredTransformer<double> m(c, 1);
  Graph<double> g(false);
  const auto enc = m.encode(g, SourceBatch::single({{4, 5}, {4, 6}}), ForwardContext{});
  EXPECT_EQ(enc.dim(), 8u);
  EXPECT_EQ(m.parameters().find("decoder.layer.0.self_attn.q.weight")->shape(), (Shape{8, 8}));
}

TEST(FactoredModelTest, ConcatPermutationPermutesBlocks) {
  auto c = small_config();
  c.arch = Architecture::NEncoders;
  c.combine = Combination::Concat;
  c.factors = {{"word", 12, 8}, {"lemma", 9, 4}};
  auto swapped = c;
  std::swap(swapped.factors[0], swapped.factors[1]);
  swapped.d_model = c.d_model;
  FactoredTransformer<double> a(c, 3), b(swapped, 4);
  ASSERT_TRUE(b.load_parameters_from(a.parameters()).empty());

  const std::vector<int> w = {4, 7, 9}, l = {5, 5, 8};
  Graph<double> g(false);
  const auto ea = a.encode(g, SourceBatch::single({w, l}), ForwardContext{});
  const auto eb = b.encode(g, SourceBatch::single({l, w}), ForwardContext{});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(ea.states(r, j), eb.states(r, 4 + j));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(ea.states(r, 8 + j), eb.states(r, j));
  }
}

TEST(FactoredModelTest, EveryFactorReceivesGradient) {
  for (const auto& v : all_variants()) {
    const auto cfg = variant_config(v, 9, 7, 10, 8, 2, 2);
    FactoredTransformer<double> m(cfg, 9);
    const auto [src, tgt] = gradcheck::tiny_batch();
    Graph<double> g;
    auto enc = m.encode(g, src, ForwardContext{});
    auto logits = m.decode(g, enc, tgt.input, tgt.batch, tgt.length, ForwardContext{});
    auto loss = label_smoothed_loss(g, logits, std::span<const int>(tgt.output), 0.1, Vocabulary::kPad);
    g.backward(loss);
    for (const auto& f : cfg.factors) {
      auto* t = m.parameters().find("src_embed." + f.name);
      ASSERT_TRUE(t->has_grad());
      const auto grad = t->grad();
      EXPECT_TRUE(std::any_of(grad.begin(), grad.end(), [](double x) { return x != 0.0; }))
          << v.name() << " " << f.name;
    }
  }
}

TEST(FactoredModelTest, DeterministicForSeed) {
  for (const auto& v : all_variants()) {
    const auto cfg = variant_config(v, 9, 7, 10, 8, 2, 2);
    FactoredTransformer<float> a(cfg, 42), b(cfg, 42);
    const std::vector<int> prefix = {Vocabulary::kBos, 5, 6};
    Graph<float> g(false);
    const auto la = a.decode_step(g, a.encode(g, SourceBatch::single({{4, 5, 6}, {4, 4, 5}}), {}), prefix);
    const auto lb = b.decode_step(g, b.encode(g, SourceBatch::single({{4, 5, 6}, {4, 4, 5}}), {}), prefix);
    EXPECT_TRUE(std::equal(la.data().begin(), la.data().end(), lb.data().begin())) << v.name();
  }
}

TEST(DecodeStepTest, CausalAndShaped) {
  FactoredTransformer<double> m(small_config(), 2);
  Graph<double> g(false);
  const auto enc = m.encode(g, SourceBatch::single({{4, 5, 6}, {4, 5, 6}}), {});
  const std::vector<int> p1 = {Vocabulary::kBos, 4, 5, 6}, p2 = {Vocabulary::kBos, 4, 9, 7};
  const auto l1 = m.decode_step(g, enc, p1), l2 = m.decode_step(g, enc, p2);
  EXPECT_EQ(l1.shape(), (Shape{4, 10}));
  for (std::size_t j = 0; j < 10; ++j) {
    EXPECT_EQ(l1(0, j), l2(0, j));
    EXPECT_EQ(l1(1, j), l2(1, j));
  }
  bool changed = false;
  for (std::size_t j = 0; j < 10; ++j) changed |= l1(2, j) != l2(2, j);
  EXPECT_TRUE(changed);
}

TEST(DecodeStepTest, Errors) {
  FactoredTransformer<double> m(small_config(), 2);
  Graph<double> g(false);
  const auto enc = m.encode(g, SourceBatch::single({{4, 5}, {4, 5}}), {});
  EXPECT_THROW(m.decode_step(g, enc, std::vector<int>(17, Vocabulary::kBos)), LengthError);
  EXPECT_THROW(m.decode_step(g, enc, std::vector<int>{4, 5}), InputError);
  EXPECT_THROW(m.decode_step(g, enc, std::vector<int>{Vocabulary::kBos, 10}), VocabError);
  EXPECT_THROW(m.encode(g, SourceBatch::single({{4, 12}, {4, 5}}), {}), VocabError);
  EXPECT_THROW(m.encode(g, SourceBatch::single({{4, 5}}), {}), InputError);
  SourceBatch bad = SourceBatch::single({{4, 5}, {4, 5}});
  bad.ids[1].pop_back();
  EXPECT_THROW(m.encode(g, bad, {}), InputError);
}

TEST(ModelGradTest, AllVariantsPass) {
  for (const auto& c : gradcheck::model_grad_cases()) {
    EXPECT_TRUE(c.report.passed()) << c.name << ": " << c.report.max_rel_error << " at "
                                   << c.report.worst_param << "[" << c.report.worst_index << "]";
    EXPECT_GE(c.report.coordinates, 100u);
  }
}

template <typename T>
TD forward_logits(const FactoredTransformer<T>& m) {
  Graph<T> g(false);
  const auto enc = m.encode(g, SourceBatch::single({{4, 5, 6, 8}, {4, 4, 5, 6}}), {});
  const auto l = m.decode_step(g, enc, std::vector<int>{Vocabulary::kBos, 7, 8});
  return TD(l.shape(), std::vector<double>(l.data().begin(), l.data().end()));
}

TEST(CheckpointTest, RoundtripIsBitExact) {
  for (const auto& v : all_variants()) {
    const auto cfg = variant_config(v, 9, 7, 10, 8, 2, 2);
    FactoredTransformer<float> m(cfg, 13);
    const auto path = temp_path("ckpt.bin");
    save_checkpoint(m, path);
    const auto loaded = load_checkpoint<float>(path);
    EXPECT_EQ(loaded.model.config(), cfg);
    EXPECT_FALSE(loaded.vocabularies.has_value());
    for (const auto& [name, t] : m.parameters()) {
      const auto* u = loaded.model.parameters().find(name);
      ASSERT_NE(u, nullptr) << name;
      EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), u->data().begin())) << name;
    }
    const auto a = forward_logits(m), b = forward_logits(loaded.model);
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin())) << v.name();
  }
}

TEST(CheckpointTest, VocabulariesTravelAlong) {
  FactoredTransformer<double> m(small_config(), 1);
  auto tokens = [](std::size_t n, const std::string& p) {
    std::vector<std::string> t(Vocabulary::kReserved.begin(), Vocabulary::kReserved.end());
    for (std::size_t i = Vocabulary::kReservedCount; i < n; ++i) t.push_back(p + std::to_string(i));
    return Vocabulary::from_tokens(t);
  };
  ModelVocabularies v{{tokens(12, "w"), tokens(9, "l")}, tokens(10, "t")};
  const auto path = temp_path("ckpt_vocab.bin");
  save_checkpoint(m, path, &v);
  const auto loaded = load_checkpoint<double>(path);
  ASSERT_TRUE(loaded.vocabularies.has_value());
  EXPECT_EQ(loaded.vocabularies->source[1].tokens(), v.source[1].tokens());
  EXPECT_EQ(loaded.vocabularies->target.tokens(), v.target.tokens());
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

TEST(CheckpointTest, CorruptionIsALoadError) {
  FactoredTransformer<float> m(small_config(), 1);
  const auto path = temp_path("ckpt_bad.bin");
  save_checkpoint(m, path);
  const auto bytes = read_bytes(path);

  for (std::size_t cut : {std::size_t{4}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(path, std::vector<char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_THROW(load_checkpoint<float>(path), LoadError) << cut;
  }
  auto v = bytes;
  v[8] = 7;
  write_bytes(path, v);
  try {
    load_checkpoint<float>(path);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  std::string s(bytes.begin(), bytes.end());
  s.replace(s.find("d_ffn=16"), 8, "d_ffn=32");
  write_bytes(path, std::vector<char>(s.begin(), s.end()));
  EXPECT_THROW(load_checkpoint<float>(path), LoadError);
  EXPECT_THROW(load_checkpoint<float>(temp_path("missing.bin")), LoadError);
}

TEST(CheckpointTest, PrecisionConversion) {
  FactoredTransformer<float> m(small_config(), 1);
  const auto path = temp_path("ckpt_f.bin");
  save_checkpoint(m, path);
  const auto d = load_checkpoint<double>(path);
  const auto* a = m.parameters().find("output.weight");
  const auto* b = d.model.parameters().find("output.weight");
  for (std::size_t i = 0; i < a->size(); ++i) EXPECT_EQ(static_cast<double>(a->data()[i]), b->data()[i]);
}

}  // namespace
}  // namespace fnmt
