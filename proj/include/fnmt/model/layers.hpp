// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Post-norm Transformer building blocks over [batch*length x width]
// activations.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fnmt/tensor/attention.hpp"
#include "fnmt/tensor/ops.hpp"

namespace fnmt {

/// Ordered, named parameter tensors of a model.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, Tensor<T> t) {
    t.set_requires_grad(true);
    for (const auto& [n, _] : items_)
      if (n == name) throw ConfigError("duplicate parameter '" + name + "'");
    items_.emplace_back(std::move(name), t);
    return t;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }
  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

/// Per-forward settings; dropout draws from `rng` only when training.
struct ForwardContext {
  bool train = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  template <typename T>
  Tensor<T> drop(Graph<T>& g, const Tensor<T>& x) const {
    if (!train || dropout == 0.0) return x;
    if (!rng) throw ConfigError("training forward pass needs a random engine");
    return fnmt::dropout(g, x, dropout, *rng, true);
  }
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const T bound = T(1) / std::sqrt(T(fan_in));
  return Tensor<T>::uniform(std::move(shape), bound, rng, true);
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
         std::mt19937_64& rng)
      : weight(ps.add(name + ".weight", init_uniform<T>({in, out}, in, rng))),
        bias(ps.add(name + ".bias", init_uniform<T>({out}, in, rng))) {}

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& x) const {
    return linear(g, x, weight, bias);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma, beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& ps, const std::string& name, std::size_t dim)
      : gamma(ps.add(name + ".gamma", Tensor<T>::full({dim}, T(1)))),
        beta(ps.add(name + ".beta", Tensor<T>({dim}))) {}

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& x) const {
    return layer_norm(g, x, gamma, beta, eps);
  }
};

template <typename T>
AttentionWeights<T> make_attention(ParameterSet<T>& ps, const std::string& name,
                                   std::size_t dim, std::mt19937_64& rng) {
  Linear<T> q(ps, name + ".q", dim, dim, rng);
  Linear<T> k(ps, name + ".k", dim, dim, rng);
  Linear<T> v(ps, name + ".v", dim, dim, rng);
  Linear<T> o(ps, name + ".o", dim, dim, rng);
  return {q.weight, q.bias, k.weight, k.bias, v.weight, v.bias, o.weight, o.bias};
}

template <typename T>
struct FeedForward {
  Linear<T> up, down;

  FeedForward() = default;
  FeedForward(ParameterSet<T>& ps, const std::string& name, std::size_t dim, std::size_t hidden,
              std::mt19937_64& rng)
      : up(ps, name + ".up", dim, hidden, rng), down(ps, name + ".down", hidden, dim, rng) {}

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& x) const {
    return down(g, relu(g, up(g, x)));
  }
};

template <typename T>
struct EncoderLayer {
  AttentionWeights<T> self_attn;
  LayerNorm<T> ln_attn;
  FeedForward<T> ffn;
  LayerNorm<T> ln_ffn;
  std::size_t heads = 1;

  EncoderLayer(ParameterSet<T>& ps, const std::string& name, std::size_t dim, std::size_t d_ffn,
               std::size_t heads_, std::mt19937_64& rng)
      : self_attn(make_attention<T>(ps, name + ".self_attn", dim, rng)),
        ln_attn(ps, name + ".ln_attn", dim),
        ffn(ps, name + ".ffn", dim, d_ffn, rng),
        ln_ffn(ps, name + ".ln_ffn", dim),
        heads(heads_) {}

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& x, std::size_t batch, std::size_t len,
                       const AttentionMask& mask, const ForwardContext& ctx) const {
    const AttentionLayout layout{batch, len, len};
    Tensor<T> a = multi_head_attention(g, x, x, self_attn, heads, layout, mask);
    Tensor<T> h = ln_attn(g, add(g, x, ctx.drop(g, a)));
    Tensor<T> f = ffn(g, h);
    return ln_ffn(g, add(g, h, ctx.drop(g, f)));
  }
};

template <typename T>
struct DecoderLayer {
  AttentionWeights<T> self_attn;
  LayerNorm<T> ln_self;
  AttentionWeights<T> cross_attn;
  LayerNorm<T> ln_cross;
  FeedForward<T> ffn;
  LayerNorm<T> ln_ffn;
  std::size_t heads = 1;

  DecoderLayer(ParameterSet<T>& ps, const std::string& name, std::size_t dim, std::size_t d_ffn,
               std::size_t heads_, std::mt19937_64& rng)
      : self_attn(make_attention<T>(ps, name + ".self_attn", dim, rng)),
        ln_self(ps, name + ".ln_self", dim),
        cross_attn(make_attention<T>(ps, name + ".cross_attn", dim, rng)),
        ln_cross(ps, name + ".ln_cross", dim),
        ffn(ps, name + ".ffn", dim, d_ffn, rng),
        ln_ffn(ps, name + ".ln_ffn", dim),
        heads(heads_) {}

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& y, std::size_t batch, std::size_t tgt_len,
                       const Tensor<T>& memory, std::size_t src_len,
                       const AttentionMask& memory_mask, const ForwardContext& ctx) const {
    AttentionMask causal;
    causal.causal = true;
    Tensor<T> a = multi_head_attention(g, y, y, self_attn, heads,
                                       AttentionLayout{batch, tgt_len, tgt_len}, causal);
    Tensor<T> h = ln_self(g, add(g, y, ctx.drop(g, a)));
    Tensor<T> c = multi_head_attention(g, h, memory, cross_attn, heads,
                                       AttentionLayout{batch, tgt_len, src_len}, memory_mask);
    Tensor<T> h2 = ln_cross(g, add(g, h, ctx.drop(g, c)));
    Tensor<T> f = ffn(g, h2);
    return ln_ffn(g, add(g, h2, ctx.drop(g, f)));
  }
};

/// Sinusoidal position table: even columns sin(pos / 10000^(2i/dim)), odd
/// columns the matching cos, tiled `batch` times along the rows.
template <typename T>
Tensor<T> positional_encoding(std::size_t len, std::size_t dim, std::size_t batch = 1) {
  if (dim % 2 != 0) {
    throw ConfigError("positional encoding needs an even width, got " + std::to_string(dim));
  }
  Tensor<T> pe({batch * len, dim});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<T>(std::sin(angle));
      pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  for (std::size_t b = 1; b < batch; ++b)
    std::copy_n(pe.ptr(), len * dim, pe.ptr() + b * len * dim);
  return pe;
}

}  // namespace fnmt
