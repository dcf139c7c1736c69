// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fnmt/tensor/ops.hpp"

namespace fnmt {

/// Additive bias given to masked attention scores before the softmax.
inline constexpr double kMaskBias = -1e9;

/// Activations are stored as rank-2 [batch*length x features] tensors with
/// the sequences of a batch laid out back to back.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t query_len = 1;
  std::size_t key_len = 1;
};

struct AttentionMask {
  /// batch*key_len flags, nonzero marks a padded key. Empty means no padding.
  std::vector<unsigned char> key_padding;
  /// Query i may only attend to keys j <= i.
  bool causal = false;

  bool masked(std::size_t b, std::size_t i, std::size_t j,
              std::size_t key_len) const {
    if (causal && j > i) return true;
    return !key_padding.empty() && key_padding[b * key_len + j] != 0;
  }
};

/// Multi-head scaled dot-product attention over already projected
/// q[B*Lq x d], k[B*Lk x d], v[B*Lk x d]. Head h reads feature columns
/// [h*d/heads, (h+1)*d/heads). Output has the shape of q.
template <typename T>
Tensor<T> scaled_dot_product_attention(Graph<T>& g, const Tensor<T>& q,
                                       const Tensor<T>& k, const Tensor<T>& v,
                                       std::size_t heads,
                                       const AttentionLayout& layout,
                                       const AttentionMask& mask) {
  detail::require_rank(q.shape(), 2, "attention");
  detail::require_rank(k.shape(), 2, "attention");
  detail::require_same(k.shape(), v.shape(), "attention");
  const std::size_t B = layout.batch, Lq = layout.query_len, Lk = layout.key_len;
  const std::size_t d = q.cols();
  if (q.rows() != B * Lq || k.rows() != B * Lk || k.cols() != d) {
    throw DimensionError("attention: q " + to_string(q.shape()) + " / k " +
                         to_string(k.shape()) + " do not fit layout batch=" +
                         std::to_string(B) + " Lq=" + std::to_string(Lq) +
                         " Lk=" + std::to_string(Lk));
  }
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(d) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (!mask.key_padding.empty() && mask.key_padding.size() != B * Lk) {
    throw DimensionError("attention: key padding mask has " +
                         std::to_string(mask.key_padding.size()) +
                         " entries, expected " + std::to_string(B * Lk));
  }
  if (mask.causal && Lq != Lk) {
    throw DimensionError("attention: causal mask needs equal query/key lengths");
  }
  const std::size_t dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  const T bias = static_cast<T>(kMaskBias);

  // probs[((b*heads + h)*Lq + i)*Lk + j]
  std::vector<T> probs(B * heads * Lq * Lk);
  Tensor<T> out({B * Lq, d}, g.tracks(q, k, v));
  std::vector<T> row(Lk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        const T* qi = q.ptr() + (b * Lq + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < Lk; ++j) {
          const T* kj = k.ptr() + (b * Lk + j) * d + h * dh;
          T s = T(0);
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= sc;
          if (mask.masked(b, i, j, Lk)) s += bias;
          row[j] = s;
          mx = std::max(mx, s);
        }
        T total = T(0);
        for (std::size_t j = 0; j < Lk; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        T* p = probs.data() + ((b * heads + h) * Lq + i) * Lk;
        T* oi = out.ptr() + (b * Lq + i) * d + h * dh;
        for (std::size_t j = 0; j < Lk; ++j) {
          p[j] = row[j] / total;
          const T* vj = v.ptr() + (b * Lk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  if (out.requires_grad()) {
    g.record([q, k, v, out, probs = std::move(probs), B, Lq, Lk, d, dh, heads,
              sc]() mutable {
      if (!out.has_grad()) return;
      auto dout = out.grad();
      std::span<T> gq, gk, gv;
      if (q.requires_grad()) gq = q.ensure_grad();
      if (k.requires_grad()) gk = k.ensure_grad();
      if (v.requires_grad()) gv = v.ensure_grad();
      std::vector<T> dp(Lk);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < Lq; ++i) {
            const T* p = probs.data() + ((b * heads + h) * Lq + i) * Lk;
            const T* doi = dout.data() + (b * Lq + i) * d + h * dh;
            T dot = T(0);
            for (std::size_t j = 0; j < Lk; ++j) {
              const T* vj = v.ptr() + (b * Lk + j) * d + h * dh;
              T s = T(0);
              for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
              dp[j] = s;
              dot += s * p[j];
              if (!gv.empty()) {
                T* gvj = gv.data() + (b * Lk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * doi[c];
              }
            }
            const T* qi = q.ptr() + (b * Lq + i) * d + h * dh;
            for (std::size_t j = 0; j < Lk; ++j) {
              const T ds = p[j] * (dp[j] - dot) * sc;
              if (ds == T(0)) continue;
              const T* kj = k.ptr() + (b * Lk + j) * d + h * dh;
              if (!gq.empty()) {
                T* gqi = gq.data() + (b * Lq + i) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
              }
              if (!gk.empty()) {
                T* gkj = gk.data() + (b * Lk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// Projection weights of one attention block. Weights are [d_in x d_model].
template <typename T>
struct AttentionWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Projects queries and keys/values, runs per-head scaled dot-product
/// attention, concatenates heads and applies the output projection.
template <typename T>
Tensor<T> multi_head_attention(Graph<T>& g, const Tensor<T>& query_in,
                               const Tensor<T>& kv_in,
                               const AttentionWeights<T>& w, std::size_t heads,
                               const AttentionLayout& layout,
                               const AttentionMask& mask) {
  const std::size_t d = w.wq.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head_attention: model dim " + std::to_string(d) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  Tensor<T> q = linear(g, query_in, w.wq, w.bq);
  Tensor<T> k = linear(g, kv_in, w.wk, w.bk);
  Tensor<T> v = linear(g, kv_in, w.wv, w.bv);
  Tensor<T> ctx = scaled_dot_product_attention(g, q, k, v, heads, layout, mask);
  return linear(g, ctx, w.wo, w.bo);
}

}  // namespace fnmt
