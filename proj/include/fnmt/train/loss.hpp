// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fnmt/tensor/ops.hpp"

namespace fnmt {

/// Cross-entropy of logits [N x V] against the label-smoothed target
/// distribution (1 - eps on the gold id, eps / (V - 1) on every other id),
/// averaged over positions whose target is not `pad_id`.
template <typename T>
Tensor<T> label_smoothed_loss(Graph<T>& g, const Tensor<T>& logits, std::span<const int> targets,
                              double eps, int pad_id) {
  detail::require_rank(logits.shape(), 2, "label_smoothed_loss");
  const std::size_t N = logits.rows(), V = logits.cols();
  if (targets.size() != N) {
    throw DimensionError("label_smoothed_loss: " + std::to_string(targets.size()) +
                         " targets for logits " + to_string(logits.shape()));
  }
  if (eps < 0.0 || eps >= 1.0) throw ConfigError("label smoothing must be in [0,1)");
  if (eps > 0.0 && V < 2) throw ConfigError("label smoothing needs at least two classes");
  std::size_t live = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (targets[i] == pad_id) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V) {
      throw VocabError("label_smoothed_loss: target id " + std::to_string(targets[i]) +
                       " outside " + std::to_string(V) + " classes");
    }
    ++live;
  }
  if (live == 0) throw InputError("label_smoothed_loss: every target is padding");

  const double on = 1.0 - eps;
  const double off = V > 1 ? eps / static_cast<double>(V - 1) : 0.0;
  const double inv_live = 1.0 / static_cast<double>(live);
  std::vector<T> probs(N * V, T(0));
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (targets[i] == pad_id) continue;
    const T* row = logits.ptr() + i * V;
    double mx = row[0];
    for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(z);
    double sum_logp = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      const double lp = static_cast<double>(row[j]) - lse;
      sum_logp += lp;
      probs[i * V + j] = static_cast<T>(std::exp(lp));
    }
    const double gold = static_cast<double>(row[targets[i]]) - lse;
    total -= on * gold + off * (sum_logp - gold);
  }
  Tensor<T> out({1}, g.tracks(logits));
  out[0] = static_cast<T>(total * inv_live);
  if (out.requires_grad()) {
    g.record([logits, out, probs = std::move(probs),
              tgt = std::vector<int>(targets.begin(), targets.end()), N, V, on, off, inv_live,
              pad_id]() mutable {
      if (!out.has_grad()) return;
      const double d = static_cast<double>(out.grad()[0]) * inv_live;
      auto gl = logits.ensure_grad();
      for (std::size_t i = 0; i < N; ++i) {
        if (tgt[i] == pad_id) continue;
        for (std::size_t j = 0; j < V; ++j) {
          const double q = static_cast<int>(j) == tgt[i] ? on : off;
          gl[i * V + j] += static_cast<T>((static_cast<double>(probs[i * V + j]) - q) * d);
        }
      }
    });
  }
  return out;
}

}  // namespace fnmt
