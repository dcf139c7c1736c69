// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference checks of every differentiable op and of the full
// training loss, at 64-bit precision.

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fnmt/model/factored_transformer.hpp"
#include "fnmt/tensor/attention.hpp"
#include "fnmt/tensor/grad_check.hpp"
#include "fnmt/train/loss.hpp"
#include "fnmt/train/batching.hpp"

namespace fnmt::gradcheck {

using TD = Tensor<double>;
using GD = Graph<double>;

struct GradCase {
  std::string name;
  GradCheckReport report;
};

inline constexpr std::size_t kGradShapes = 5;

/// Reduces any tensor to a scalar through fixed random weights so every
/// output coordinate contributes a distinct gradient.
inline TD weighted_sum(GD& g, const TD& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TD w = TD::uniform(x.shape(), 1.0, rng);
  return sum(g, mul(g, x, w));
}

inline TD rand_t(Shape s, std::mt19937_64& rng, double bound = 1.0) {
  return TD::uniform(std::move(s), bound, rng);
}

/// Every op over kGradShapes random shapes.
inline std::vector<GradCase> op_grad_cases(std::uint64_t seed = 1) {
  std::vector<GradCase> out;
  std::mt19937_64 rng(seed);
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  auto run = [&](const std::string& name, auto f, std::vector<NamedTensor> params) {
    out.push_back({name, grad_check(f, std::move(params))});
  };

  for (std::size_t s = 0; s < kGradShapes; ++s) {
    const std::string tag = "#" + std::to_string(s);
    const std::size_t m = dim(1, 5), k = dim(1, 6), n = dim(1, 5);
    const std::uint64_t ws = rng();
    {
      TD a = rand_t({m, k}, rng), b = rand_t({k, n}, rng);
      run("matmul" + tag, [=](GD& g) { return weighted_sum(g, matmul(g, a, b), ws); },
          {{"a", a}, {"b", b}});
    }
    {
      TD a = rand_t({m, k}, rng), b = rand_t({m, k}, rng);
      run("add" + tag, [=](GD& g) { return weighted_sum(g, add(g, a, b), ws); },
          {{"a", a}, {"b", b}});
      run("mul" + tag, [=](GD& g) { return weighted_sum(g, mul(g, a, b), ws); },
          {{"a", a}, {"b", b}});
      run("scale" + tag, [=](GD& g) { return weighted_sum(g, scale(g, a, 1.7), ws); },
          {{"a", a}});
      run("relu" + tag, [=](GD& g) { return weighted_sum(g, relu(g, a), ws); }, {{"a", a}});
      run("sum" + tag, [=](GD& g) { return sum(g, a); }, {{"a", a}});
    }
    {
      TD x = rand_t({m, k}, rng), bias = rand_t({k}, rng);
      run("add_bias" + tag, [=](GD& g) { return weighted_sum(g, add_bias(g, x, bias), ws); },
          {{"x", x}, {"bias", bias}});
    }
    {
      TD x = rand_t({m, k, n}, rng, 2.0);
      const std::size_t axis = s % 3;
      run("softmax(axis=" + std::to_string(axis) + ")" + tag,
          [=](GD& g) { return weighted_sum(g, softmax(g, x, axis), ws); }, {{"x", x}});
    }
    {
      const std::size_t f = dim(2, 7);
      TD x = rand_t({m, f}, rng, 2.0), gamma = rand_t({f}, rng), beta = rand_t({f}, rng);
      run("layer_norm" + tag,
          [=](GD& g) { return weighted_sum(g, layer_norm(g, x, gamma, beta, 1e-5), ws); },
          {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    }
    {
      TD x = rand_t({m, k}, rng);
      const std::uint64_t ds = rng();
      run("dropout" + tag,
          [=](GD& g) {
            std::mt19937_64 r(ds);
            return weighted_sum(g, dropout(g, x, 0.3, r, true), ws);
          },
          {{"x", x}});
    }
    {
      const std::size_t V = dim(2, 6), d = dim(1, 4), len = dim(1, 6);
      TD table = rand_t({V, d}, rng);
      std::vector<int> ids;
      for (std::size_t i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng() % V));
      run("embedding" + tag,
          [=](GD& g) { return weighted_sum(g, embedding(g, table, std::span<const int>(ids)), ws); },
          {{"table", table}});
    }
    {
      TD a = rand_t({m, dim(1, 4)}, rng), b = rand_t({m, dim(1, 4)}, rng),
         c = rand_t({m, dim(1, 4)}, rng);
      run("concat_features" + tag,
          [=](GD& g) { return weighted_sum(g, concat_features(g, std::vector<TD>{a, b, c}), ws); },
          {{"a", a}, {"b", b}, {"c", c}});
    }
    {
      TD x = rand_t({m, k}, rng), w = rand_t({k, n}, rng), b = rand_t({n}, rng);
      run("linear" + tag, [=](GD& g) { return weighted_sum(g, linear(g, x, w, b), ws); },
          {{"x", x}, {"w", w}, {"b", b}});
    }
    {
      const std::size_t heads = dim(1, 3), dh = dim(1, 3), d = heads * dh;
      const std::size_t B = dim(1, 3), L = dim(1, 4);
      AttentionLayout lay{B, L, L};
      AttentionMask mask;
      mask.causal = s % 2 == 0;
      mask.key_padding.assign(B * L, 0);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 1 + rng() % L; j < L; ++j) mask.key_padding[b * L + j] = 1;
      TD q = rand_t({B * L, d}, rng), kk = rand_t({B * L, d}, rng), v = rand_t({B * L, d}, rng);
      run("scaled_dot_product_attention" + tag,
          [=](GD& g) {
            return weighted_sum(g, scaled_dot_product_attention(g, q, kk, v, heads, lay, mask), ws);
          },
          {{"q", q}, {"k", kk}, {"v", v}});

      const std::size_t Lk = dim(1, 4);
      AttentionLayout cross{B, L, Lk};
      AttentionMask cmask;
      cmask.key_padding.assign(B * Lk, 0);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 1 + rng() % Lk; j < Lk; ++j) cmask.key_padding[b * Lk + j] = 1;
      TD xq = rand_t({B * L, d}, rng), xkv = rand_t({B * Lk, d}, rng);
      AttentionWeights<double> aw{rand_t({d, d}, rng), rand_t({d}, rng), rand_t({d, d}, rng),
                                  rand_t({d}, rng),    rand_t({d, d}, rng), rand_t({d}, rng),
                                  rand_t({d, d}, rng), rand_t({d}, rng)};
      run("multi_head_attention" + tag,
          [=](GD& g) {
            return weighted_sum(g, multi_head_attention(g, xq, xkv, aw, heads, cross, cmask), ws);
          },
          {{"query", xq}, {"memory", xkv}, {"wq", aw.wq}, {"bq", aw.bq}, {"wk", aw.wk},
           {"bk", aw.bk}, {"wv", aw.wv}, {"bv", aw.bv}, {"wo", aw.wo}, {"bo", aw.bo}});
    }
    {
      const std::size_t N = dim(1, 6), V = dim(2, 8);
      TD logits = rand_t({N, V}, rng, 3.0);
      std::vector<int> tgt;
      for (std::size_t i = 0; i < N; ++i) tgt.push_back(static_cast<int>(rng() % V));
      tgt[0] = 1;                 // at least one live position
      if (N > 1) tgt[N - 1] = 0;  // and one padded position
      run("label_smoothed_loss" + tag,
          [=](GD& g) { return label_smoothed_loss(g, logits, std::span<const int>(tgt), 0.1, 0); },
          {{"logits", logits}});
    }
  }
  return out;
}

/// Two-factor d_model=8, 2-layer, 2-head configuration. Concatenation
/// halves the factor widths with one encoder and keeps them whole with one
/// encoder per factor (so the decoder runs at 16).
inline ModelConfig small_model_config(Architecture arch, Combination combine) {
  ModelConfig c;
  c.arch = arch;
  c.combine = combine;
  const std::size_t fd =
      combine == Combination::Concat && arch == Architecture::OneEncoder ? 4 : 8;
  c.factors = {{"word", 9, fd}, {"lemma", 7, fd}};
  c.target_vocab = 10;
  c.layers_enc = c.layers_dec = 2;
  c.heads = 2;
  c.d_model = 8;
  c.d_ffn = 16;
  c.dropout = 0.0;
  c.max_len = 64;
  return c;
}

/// A padded two-sentence batch for a two-factor model; ids stay below 8.
inline std::pair<SourceBatch, TargetBatch> tiny_batch() {
  SourceBatch s;
  s.batch = 2;
  s.length = 4;
  s.ids = {{4, 5, 6, 7, 5, 4, 0, 0}, {4, 4, 5, 4, 5, 4, 0, 0}};
  s.padding = {0, 0, 0, 0, 0, 0, 1, 1};
  TargetBatch t;
  t.batch = 2;
  t.length = 4;
  t.input = {1, 4, 5, 6, 1, 6, 0, 0};
  t.output = {4, 5, 6, 2, 6, 2, 0, 0};
  return {s, t};
}

/// Full label-smoothed loss of a d_model=8, 2-layer, 2-head model in each
/// architecture/combination variant, over every parameter.
inline std::vector<GradCase> model_grad_cases(std::uint64_t seed = 3) {
  std::vector<GradCase> out;
  const auto [src, tgt] = tiny_batch();
  for (auto arch : {Architecture::OneEncoder, Architecture::NEncoders}) {
    for (auto comb : {Combination::Sum, Combination::Concat}) {
      FactoredTransformer<double> model(small_model_config(arch, comb), seed);
      std::vector<NamedTensor> params;
      for (const auto& [name, p] : model.parameters()) params.emplace_back(name, p);
      auto f = [&, src = src, tgt = tgt](GD& g) {
        auto enc = model.encode(g, src, ForwardContext{});
        auto logits = model.decode(g, enc, tgt.input, tgt.batch, tgt.length, ForwardContext{});
        return label_smoothed_loss(g, logits, std::span<const int>(tgt.output), 0.1,
                                   Vocabulary::kPad);
      };
      out.push_back({"model " + std::string(to_string(arch)) + "+" + std::string(to_string(comb)),
                     grad_check(f, std::move(params))});
    }
  }
  return out;
}

}  // namespace fnmt::gradcheck
