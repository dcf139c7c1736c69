// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable tensor operations. Every op takes the graph it records into
// as its first argument; with a non-recording graph (or inputs that need no
// gradient) the op only computes the forward value.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fnmt/tensor/graph.hpp"
#include "fnmt/tensor/tensor.hpp"

namespace fnmt {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " + to_string(s));
  }
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) +
                         " vs " + to_string(b));
  }
}

template <typename T>
void accumulate(const Tensor<T>& dst, std::span<const T> src) {
  auto g = dst.ensure_grad();
  for (std::size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

}  // namespace detail

/// C = A·B for A[m×k], B[k×n].
template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.shape(), 2, "matmul");
  detail::require_rank(b.shape(), 2, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out({m, n}, g.tracks(a, b));
  detail::MatrixMap<T>(out.ptr(), m, n).noalias() =
      detail::ConstMatrixMap<T>(a.ptr(), m, k) *
      detail::ConstMatrixMap<T>(b.ptr(), k, n);
  if (out.requires_grad()) {
    g.record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      detail::ConstMatrixMap<T> dc(out.grad().data(), m, n);
      if (a.requires_grad()) {
        detail::MatrixMap<T>(a.ensure_grad().data(), m, k).noalias() +=
            dc * detail::ConstMatrixMap<T>(b.ptr(), k, n).transpose();
      }
      if (b.requires_grad()) {
        detail::MatrixMap<T>(b.ensure_grad().data(), k, n).noalias() +=
            detail::ConstMatrixMap<T>(a.ptr(), m, k).transpose() * dc;
      }
    });
  }
  return out;
}

/// Elementwise a + b for equal shapes.
template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape(), g.tracks(a, b));
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (out.requires_grad()) {
    g.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      std::span<const T> d = out.grad();
      if (a.requires_grad()) detail::accumulate(a, d);
      if (b.requires_grad()) detail::accumulate(b, d);
    });
  }
  return out;
}

/// x + bias, with bias broadcast over every row of the last axis.
template <typename T>
Tensor<T> add_bias(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = x.shape().back();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) +
                         " does not match last axis of " + to_string(x.shape()));
  }
  Tensor<T> out(x.shape(), g.tracks(x, bias));
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] + bias[c];
  if (out.requires_grad()) {
    g.record([x, bias, out, rows, n]() mutable {
      if (!out.has_grad()) return;
      std::span<const T> d = out.grad();
      if (x.requires_grad()) detail::accumulate(x, d);
      if (bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < n; ++c) gb[c] += d[r * n + c];
      }
    });
  }
  return out;
}

/// Elementwise product.
template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape(), g.tracks(a, b));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  if (out.requires_grad()) {
    g.record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) gb[i] += d[i] * a[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape(), g.tracks(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  if (out.requires_grad()) {
    g.record([a, out, s]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& a) {
  Tensor<T> out(a.shape(), g.tracks(a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  if (out.requires_grad()) {
    g.record([a, out]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      auto ga = a.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (a[i] > T(0)) ga[i] += d[i];
    });
  }
  return out;
}

/// Sum of all elements, as a shape-[1] tensor.
template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& a) {
  Tensor<T> out({1}, g.tracks(a));
  T acc = T(0);
  for (auto v : a.data()) acc += v;
  out[0] = acc;
  if (out.requires_grad()) {
    g.record([a, out]() mutable {
      if (!out.has_grad()) return;
      const T d = out.grad()[0];
      for (auto& v : a.ensure_grad()) v += d;
    });
  }
  return out;
}

/// Softmax along `axis`, stabilised by subtracting the slice maximum.
template <typename T>
Tensor<T> softmax(Graph<T>& g, const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for " + to_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);

  Tensor<T> out(x.shape(), g.tracks(x));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(x[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  if (out.requires_grad()) {
    g.record([x, out, outer, inner, n]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          T dot = T(0);
          for (std::size_t j = 0; j < n; ++j)
            dot += d[base + j * inner] * out[base + j * inner];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += out[idx] * (d[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

/// Normalises the last axis to zero mean and unit (population) variance,
/// then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  const std::size_t n = x.shape().back();
  if (gamma.size() != n || beta.size() != n) {
    throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) +
                         " / beta " + to_string(beta.shape()) +
                         " do not match last axis of " + to_string(x.shape()));
  }
  if (!(eps > T(0))) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape(), g.tracks(x, gamma, beta));
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.ptr() + r * n;
    T mean = T(0);
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= T(n);
    T var = T(0);
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= T(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const T h = (row[c] - mean) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = h * gamma[c] + beta[c];
    }
  }
  if (out.requires_grad()) {
    g.record([x, gamma, beta, out, xhat = std::move(xhat),
              inv_std = std::move(inv_std), rows, n]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      if (gamma.requires_grad() || beta.requires_grad()) {
        auto gg = gamma.ensure_grad();
        auto gb = beta.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            gg[c] += d[r * n + c] * xhat[r * n + c];
            gb[c] += d[r * n + c];
          }
      }
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dh = T(0), mean_dh_h = T(0);
          for (std::size_t c = 0; c < n; ++c) {
            const T dh = d[r * n + c] * gamma[c];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * n + c];
          }
          mean_dh /= T(n);
          mean_dh_h /= T(n);
          for (std::size_t c = 0; c < n; ++c) {
            const T dh = d[r * n + c] * gamma[c];
            gx[r * n + c] +=
                inv_std[r] * (dh - mean_dh - xhat[r * n + c] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

/// Inverted dropout: surviving activations are scaled by 1/(1-p) at train
/// time so inference is the identity.
template <typename T, typename Rng>
Tensor<T> dropout(Graph<T>& g, const Tensor<T>& x, double p, Rng& rng,
                  bool train) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0,1)");
  if (!train || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T s = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  Tensor<T> out(x.shape(), g.tracks(x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = keep(rng) ? s : T(0);
    out[i] = x[i] * mask[i];
  }
  if (out.requires_grad()) {
    g.record([x, out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) gx[i] += d[i] * mask[i];
    });
  }
  return out;
}

/// Row gather: out[i] = table[ids[i]].
template <typename T>
Tensor<T> embedding(Graph<T>& g, const Tensor<T>& table, std::span<const int> ids) {
  detail::require_rank(table.shape(), 2, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw VocabError("embedding: id " + std::to_string(ids[i]) +
                       " at position " + std::to_string(i) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  Tensor<T> out({ids.size(), d}, g.tracks(table));
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.ptr() + static_cast<std::size_t>(ids[i]) * d, d,
                out.ptr() + i * d);
  if (out.requires_grad()) {
    g.record([table, out, ids = std::vector<int>(ids.begin(), ids.end()), d]() mutable {
      if (!out.has_grad()) return;
      auto dout = out.grad();
      auto gt = table.ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(ids[i]) * d;
        for (std::size_t c = 0; c < d; ++c) gt[row + c] += dout[i * d + c];
      }
    });
  }
  return out;
}

/// Concatenation of rank-2 tensors along the feature (last) axis.
template <typename T>
Tensor<T> concat_features(Graph<T>& g, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_features: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  bool track = false;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 2, "concat_features");
    if (p.rows() != rows) {
      throw DimensionError("concat_features: row mismatch " +
                           to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    }
    total += p.cols();
    track = track || p.requires_grad();
  }
  Tensor<T> out({rows, total}, g.recording() && track);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.ptr() + r * c, c, out.ptr() + r * total + offset);
    offset += c;
  }
  if (out.requires_grad()) {
    g.record([parts, out, rows, total]() mutable {
      if (!out.has_grad()) return;
      auto d = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t c = p.cols();
        if (p.requires_grad()) {
          auto gp = p.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j)
              gp[r * c + j] += d[r * total + offset + j];
        }
        offset += c;
      }
    });
  }
  return out;
}

/// x·W + b with W[in×out] and b[out].
template <typename T>
Tensor<T> linear(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  return add_bias(g, matmul(g, x, weight), bias);
}

}  // namespace fnmt
