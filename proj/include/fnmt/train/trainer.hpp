// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "fnmt/model/checkpoint.hpp"
#include "fnmt/model/factored_transformer.hpp"
#include "fnmt/train/batching.hpp"
#include "fnmt/train/loss.hpp"
#include "fnmt/train/optimizer.hpp"

namespace fnmt {

struct TrainConfig {
  std::size_t token_batch = 4000;
  double label_smoothing = 0.1;
  double lr = 5e-4;  // peak learning rate
  std::size_t warmup = 4000;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 1;
  std::size_t eval_every = 100;
  AdamOptions adam;

  void validate() const {
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
      throw ConfigError("label_smoothing must be in [0,1)");
    }
    if (token_batch == 0) throw ConfigError("token_batch must be positive");
    if (eval_every == 0) throw ConfigError("eval_every must be positive");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
  }
};

struct TrainMetrics {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over the steps since the previous record
  double lr = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<TrainMetrics> log;
  std::vector<double> step_losses;
  std::size_t steps = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Where train() writes checkpoint_last.bin, checkpoint_best.bin and
/// metrics.tsv. An empty directory disables writing.
struct TrainArtifacts {
  std::filesystem::path dir;
  const ModelVocabularies* vocabularies = nullptr;
};

struct TrainHooks {
  /// Called after every evaluation; returning true ends training.
  std::function<bool(const TrainMetrics&)> on_eval;
};

/// Forward + backward on one batch; returns the loss. Gradients accumulate
/// into the model parameters.
template <typename T>
double train_step(FactoredTransformer<T>& model, const Batch& batch, double smoothing,
                  const ForwardContext& ctx) {
  Graph<T> g;
  auto enc = model.encode(g, batch.source, ctx);
  auto logits =
      model.decode(g, enc, batch.target.input, batch.target.batch, batch.target.length, ctx);
  auto loss = label_smoothed_loss(g, logits, batch.target.output, smoothing, Vocabulary::kPad);
  const double value = static_cast<double>(loss.item());
  if (std::isfinite(value)) g.backward(loss);
  return value;
}

/// Token-weighted mean loss over `batches` with no dropout.
template <typename T>
double evaluate_loss(const FactoredTransformer<T>& model, const std::vector<Batch>& batches,
                     double smoothing) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& b : batches) {
    Graph<T> g(false);
    auto enc = model.encode(g, b.source, ForwardContext{});
    auto logits = model.decode(g, enc, b.target.input, b.target.batch, b.target.length,
                               ForwardContext{});
    auto loss = label_smoothed_loss(g, logits, b.target.output, smoothing, Vocabulary::kPad);
    std::size_t n = 0;
    for (int t : b.target.output) n += t != Vocabulary::kPad;
    total += static_cast<double>(loss.item()) * static_cast<double>(n);
    tokens += n;
  }
  return tokens ? total / static_cast<double>(tokens) : std::numeric_limits<double>::quiet_NaN();
}

/// Adam with the inverse square root schedule over token-budget batches.
/// Batch order is reshuffled every epoch from the run seed.
template <typename T>
TrainResult train(FactoredTransformer<T>& model, const std::vector<ParallelExample>& train_set,
                  const std::vector<ParallelExample>& valid_set, const TrainConfig& cfg,
                  const TrainArtifacts& artifacts = {}, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train_set.empty()) throw InputError("training corpus is empty");
  const auto batches = make_batches(train_set, cfg.token_batch);
  const auto valid_batches =
      valid_set.empty() ? std::vector<Batch>{} : make_batches(valid_set, cfg.token_batch);

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  ForwardContext ctx{true, model.config().dropout, &dropout_rng};
  Adam<T> adam(model.parameters(), cfg.adam);

  std::ofstream metrics;
  const bool write = !artifacts.dir.empty();
  if (write) {
    std::filesystem::create_directories(artifacts.dir);
    metrics.open(artifacts.dir / "metrics.tsv");
    metrics << "step\ttrain_loss\tlr\tval_loss\n";
  }

  TrainResult result;
  std::vector<std::size_t> order(batches.size());
  std::size_t cursor = order.size();
  double window = 0.0;
  std::size_t window_n = 0;
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const std::size_t bi = order[cursor++];
    model.parameters().zero_grad();
    const double loss = train_step(model, batches[bi], cfg.label_smoothing, ctx);
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite training loss at step " + std::to_string(step) +
                           " (batch " + std::to_string(bi) + ")");
    }
    const double lr = inverse_sqrt_lr(step, cfg.lr, cfg.warmup);
    adam.step(lr);
    result.step_losses.push_back(loss);
    result.steps = step;
    window += loss;
    ++window_n;

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      TrainMetrics m;
      m.step = step;
      m.train_loss = window / static_cast<double>(window_n);
      m.lr = lr;
      window = 0.0;
      window_n = 0;
      if (!valid_batches.empty()) m.val_loss = evaluate_loss(model, valid_batches, cfg.label_smoothing);
      result.log.push_back(m);
      const double score = valid_batches.empty() ? m.train_loss : m.val_loss;
      if (write) {
        metrics << m.step << '\t' << std::setprecision(6) << m.train_loss << '\t' << m.lr << '\t';
        if (std::isnan(m.val_loss)) metrics << "nan";
        else metrics << m.val_loss;
        metrics << '\n' << std::flush;
      }
      if (score < result.best_loss) {
        result.best_loss = score;
        if (write) save_checkpoint(model, artifacts.dir / "checkpoint_best.bin", artifacts.vocabularies);
      }
      if (hooks.on_eval && hooks.on_eval(m)) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (write) save_checkpoint(model, artifacts.dir / "checkpoint_last.bin", artifacts.vocabularies);
  return result;
}

}  // namespace fnmt
