// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "fnmt/train/trainer.hpp"
#include "support/oracles.hpp"
#include "support/tasks.hpp"

namespace fnmt {
namespace {

namespace fs = std::filesystem;
using TD = Tensor<double>;

oracle::Matrix to_matrix(const TD& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

double loss_value(const TD& logits, const std::vector<int>& targets, double eps, int pad = 0) {
  Graph<double> g(false);
  return label_smoothed_loss(g, logits, std::span<const int>(targets), eps, pad).item();
}

TEST(LossTest, NoSmoothingIsNll) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t N = 1 + rng() % 6, V = 2 + rng() % 9;
    const TD logits = TD::uniform({N, V}, 4.0, rng);
    std::vector<int> tgt;
    for (std::size_t i = 0; i < N; ++i) tgt.push_back(1 + static_cast<int>(rng() % (V - 1)));
    long double nll = 0;
    for (std::size_t i = 0; i < N; ++i) {
      long double z = 0;
      for (std::size_t j = 0; j < V; ++j) z += std::exp(static_cast<long double>(logits(i, j)));
      nll -= logits(i, static_cast<std::size_t>(tgt[i])) - std::log(z);
    }
    EXPECT_NEAR(loss_value(logits, tgt, 0.0), static_cast<double>(nll / N), 1e-10);
  }
}

TEST(LossTest, UniformLogitsGiveLogV) {
  const TD logits = TD::full({3, 11}, 0.25);
  EXPECT_NEAR(loss_value(logits, {4, 7, 10}, 0.0), std::log(11.0), 1e-12);
}

TEST(LossTest, SmoothedMatchesDirectSum) {
  std::mt19937_64 rng(2);
  const TD logits = TD::uniform({5, 7}, 3.0, rng);
  const std::vector<int> tgt = {3, 0, 6, 1, 5};
  EXPECT_NEAR(loss_value(logits, tgt, 0.1),
              oracle::smoothed_loss(to_matrix(logits), tgt, 0.1, 0), 1e-10);
}

TEST(LossTest, Errors) {
  const TD logits = TD::full({2, 4}, 0.0);
  EXPECT_THROW(loss_value(logits, {0, 0}, 0.1), InputError);
  EXPECT_THROW(loss_value(logits, {1, 2}, 1.0), ConfigError);
  EXPECT_THROW(loss_value(logits, {1}, 0.1), DimensionError);
}

ParallelExample example(std::size_t src_len, std::size_t tgt_len, int base = 4) {
  ParallelExample e;
  e.source.resize(2);
  for (std::size_t i = 0; i < src_len; ++i) {
    e.source[0].push_back(base + static_cast<int>(i % 5));
    e.source[1].push_back(base + static_cast<int>(i % 3));
  }
  for (std::size_t i = 0; i < tgt_len; ++i) e.target.push_back(base + static_cast<int>(i % 4));
  return e;
}

TEST(BatchingTest, PaddingCountsAgainstBudget) {
  const auto b = make_batches({example(5, 3), example(5, 3), example(5, 3)}, 10);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].source.batch, 2u);
  EXPECT_EQ(b[1].source.batch, 1u);
  EXPECT_EQ(make_batches({example(5, 3), example(5, 3), example(5, 3)}, 15).size(), 1u);
}

TEST(BatchingTest, PartitionWithinBudget) {
  std::mt19937_64 rng(4);
  std::vector<ParallelExample> ex;
  for (int i = 0; i < 137; ++i) ex.push_back(example(1 + rng() % 12, 1 + rng() % 9));
  const auto batches = make_batches(ex, 40);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    EXPECT_LE(b.source.batch * b.source.length, 40u);
    for (const auto& ids : b.source.ids) EXPECT_EQ(ids.size(), b.source.padding.size());
    for (std::size_t r = 0; r < b.indices.size(); ++r) {
      const auto& e = ex[b.indices[r]];
      for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t t = 0; t < b.source.length; ++t) {
          const bool pad = b.source.padding[r * b.source.length + t];
          EXPECT_EQ(pad, t >= e.source_length());
          if (pad) {
            EXPECT_EQ(b.source.ids[f][r * b.source.length + t], Vocabulary::kPad);
          }
        }
    }
    seen.insert(b.indices.begin(), b.indices.end());
  }
  ASSERT_EQ(seen.size(), ex.size());
  std::size_t k = 0;
  for (auto i : seen) EXPECT_EQ(i, k++);
}

TEST(BatchingTest, TargetsShiftedWithBosAndEos) {
  const auto b = collate({example(2, 2)}, {0});
  EXPECT_EQ(b.target.input, (std::vector<int>{Vocabulary::kBos, 4, 5}));
  EXPECT_EQ(b.target.output, (std::vector<int>{4, 5, Vocabulary::kEos}));
}

TEST(BatchingTest, OverlongSentenceNamed) {
  try {
    make_batches({example(3, 2), example(9, 2)}, 8);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("sentence 1"), std::string::npos);
  }
}

TEST(ScheduleTest, WarmupThenInverseSqrt) {
  EXPECT_EQ(inverse_sqrt_lr(0, 1e-3, 100), 0.0);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(50, 1e-3, 100), 5e-4);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(100, 1e-3, 100), 1e-3);
  EXPECT_DOUBLE_EQ(inverse_sqrt_lr(400, 1e-3, 100), 5e-4);
  double best = 0.0;
  std::size_t arg = 0;
  for (std::size_t s = 0; s < 1000; ++s)
    if (inverse_sqrt_lr(s, 1e-3, 100) > best) best = inverse_sqrt_lr(s, 1e-3, 100), arg = s;
  EXPECT_EQ(arg, 100u);
}

ModelConfig tiny_config() {
  return testing::variant_config({Architecture::OneEncoder, Combination::Sum}, 9, 7, 10, 8, 1, 2);
}

std::map<std::string, std::vector<double>> gradients(FactoredTransformer<double>& m, const Batch& b) {
  m.parameters().zero_grad();
  train_step(m, b, 0.1, ForwardContext{});
  std::map<std::string, std::vector<double>> out;
  for (auto& [name, t] : m.parameters())
    out[name] = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                             : std::vector<double>(t.size(), 0.0);
  return out;
}

TEST(TrainStepTest, PaddingContributesNoGradient) {
  FactoredTransformer<double> m(tiny_config(), 5);
  const std::vector<ParallelExample> ex = {example(6, 5), example(2, 1, 5)};
  auto batch = collate(ex, {0, 1});
  const auto ref = gradients(m, batch);

  auto noisy = batch;
  for (std::size_t i = 0; i < noisy.source.padding.size(); ++i)
    if (noisy.source.padding[i])
      for (auto& ids : noisy.source.ids) ids[i] = 6;
  for (std::size_t i = 0; i < noisy.target.output.size(); ++i)
    if (noisy.target.output[i] == Vocabulary::kPad && noisy.target.input[i] == Vocabulary::kPad)
      noisy.target.input[i] = 7;
  const auto alt = gradients(m, noisy);
  for (const auto& [name, g] : ref)
    for (std::size_t i = 0; i < g.size(); ++i) ASSERT_NEAR(g[i], alt.at(name)[i], 1e-12) << name;

  // Tokens are weighted equally: the batch gradient is the token-weighted
  // mean of the per-sentence gradients.
  const auto g0 = gradients(m, collate(ex, {0})), g1 = gradients(m, collate(ex, {1}));
  const double n0 = 6.0, n1 = 2.0;
  for (const auto& [name, g] : ref)
    for (std::size_t i = 0; i < g.size(); ++i)
      ASSERT_NEAR(g[i], (n0 * g0.at(name)[i] + n1 * g1.at(name)[i]) / (n0 + n1), 1e-10) << name;
  EXPECT_TRUE(std::all_of(ref.at("src_embed.word").begin(), ref.at("src_embed.word").begin() + 8,
                          [](double v) { return v == 0.0; }));
}

TEST(TrainStepTest, SmallStepDescends) {
  for (const auto& v : testing::all_variants()) {
    FactoredTransformer<double> m(testing::variant_config(v, 9, 7, 10, 8, 2, 2), 6);
    const auto batch = collate({example(5, 4), example(3, 3)}, {0, 1});
    Adam<double> adam(m.parameters());
    m.parameters().zero_grad();
    const double before = train_step(m, batch, 0.1, ForwardContext{});
    adam.step(1e-4);
    const double after = evaluate_loss(m, {batch}, 0.1);
    EXPECT_LT(after, before) << v.name();
  }
}

TrainConfig copy_config() {
  TrainConfig c;
  c.token_batch = 300;
  c.label_smoothing = 0.0;
  c.lr = 1e-3;
  c.warmup = 200;
  c.max_steps = 2000;
  c.eval_every = 50;
  c.seed = 3;
  return c;
}

TEST(TrainTest, CopyTaskLossBelowPointOne) {
  const auto task = testing::CopyTask::make(200, 8);
  auto cfg = testing::variant_config({Architecture::OneEncoder, Combination::Sum},
                                     task.word_vocab(), task.factor_vocab(), task.word_vocab(),
                                     64, 2, 2);
  FactoredTransformer<float> m(cfg, 1);
  TrainHooks hooks;
  hooks.on_eval = [](const TrainMetrics& x) { return x.train_loss < 0.1; };
  const auto r = train(m, task.examples, {}, copy_config(), {}, hooks);
  ASSERT_FALSE(r.log.empty());
  EXPECT_LT(r.log.back().train_loss, 0.1);
  EXPECT_LE(r.steps, 2000u);
}

TEST(TrainTest, SameSeedSameCurve) {
  const auto task = testing::CopyTask::make(40, 9);
  auto cfg = testing::variant_config({Architecture::NEncoders, Combination::Concat},
                                     task.word_vocab(), task.factor_vocab(), task.word_vocab(),
                                     16, 1, 2);
  cfg.dropout = 0.1;
  auto tc = copy_config();
  tc.max_steps = 30;
  tc.token_batch = 60;
  std::vector<std::vector<double>> curves;
  for (int run = 0; run < 2; ++run) {
    FactoredTransformer<float> m(cfg, 2);
    curves.push_back(train(m, task.examples, task.examples, tc).step_losses);
  }
  EXPECT_EQ(curves[0], curves[1]);
  tc.seed = 4;
  FactoredTransformer<float> m(cfg, 2);
  EXPECT_NE(train(m, task.examples, {}, tc).step_losses, curves[0]);
}

TEST(TrainTest, ArtifactsAndCheckpointAccuracy) {
  const auto dir = fs::temp_directory_path() / "fnmt_test_train_run";
  fs::remove_all(dir);
  const auto task = testing::CopyTask::make(200, 10);
  auto cfg = testing::variant_config({Architecture::OneEncoder, Combination::Concat},
                                     task.word_vocab(), task.factor_vocab(), task.word_vocab(),
                                     32, 2, 2);
  FactoredTransformer<float> m(cfg, 1);
  auto tc = copy_config();
  tc.max_steps = 400;
  tc.eval_every = 100;
  const auto r = train(m, task.examples, task.examples, tc, {dir});
  ASSERT_EQ(r.log.size(), 4u);
  EXPECT_FALSE(std::isnan(r.log.back().val_loss));

  std::ifstream metrics(dir / "metrics.tsv");
  std::string line;
  std::getline(metrics, line);
  EXPECT_EQ(line, "step\ttrain_loss\tlr\tval_loss");
  std::size_t rows = 0;
  while (std::getline(metrics, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3);
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  ASSERT_TRUE(fs::exists(dir / "checkpoint_best.bin"));
  ASSERT_TRUE(fs::exists(dir / "checkpoint_last.bin"));

  const auto loaded = load_checkpoint<float>(dir / "checkpoint_last.bin");
  const double before = testing::greedy_bleu(m, task.examples);
  EXPECT_GT(before, 50.0);
  EXPECT_EQ(testing::greedy_bleu(loaded.model, task.examples), before);
}

TEST(TrainTest, NonFiniteLossAborts) {
  const auto task = testing::CopyTask::make(10, 11);
  auto cfg = testing::variant_config({Architecture::OneEncoder, Combination::Sum},
                                     task.word_vocab(), task.factor_vocab(), task.word_vocab(),
                                     8, 1, 2);
  FactoredTransformer<double> m(cfg, 1);
  m.parameters().find("output.bias")->data()[5] = std::numeric_limits<double>::infinity();
  try {
    train(m, task.examples, {}, copy_config());
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
  EXPECT_THROW(train(m, {}, {}, copy_config()), InputError);
}

}  // namespace
}  // namespace fnmt
