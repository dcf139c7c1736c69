// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fnmt/bpe/vocabulary.hpp"
#include "fnmt/model/factored_transformer.hpp"

namespace fnmt {

struct DecodeOptions {
  std::size_t beam_size = 4;
  /// Generated tokens per hypothesis, EOS included. A hypothesis reaching
  /// this length without EOS is finished as is.
  std::size_t max_len = 64;
  /// Hypotheses are ranked by log_prob / length^length_penalty.
  double length_penalty = 1.0;
};

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, EOS included when finished by it
  double log_prob = 0.0;
  bool finished = false;

  double score(double length_penalty) const {
    if (tokens.empty()) return log_prob;
    return log_prob / std::pow(static_cast<double>(tokens.size()), length_penalty);
  }

  /// Output ids with EOS removed.
  std::vector<int> output() const {
    std::vector<int> out;
    for (int t : tokens)
      if (t != Vocabulary::kEos && t != Vocabulary::kBos) out.push_back(t);
    return out;
  }
};

/// Ids the decoder never emits.
inline bool is_generable(int id) { return id != Vocabulary::kPad && id != Vocabulary::kBos; }

/// Log-softmax of one logits row, computed in double.
template <typename T>
std::vector<double> log_probs(const T* row, std::size_t V) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < V; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double z = 0.0;
  for (std::size_t j = 0; j < V; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(V);
  for (std::size_t j = 0; j < V; ++j) out[j] = static_cast<double>(row[j]) - lse;
  return out;
}

/// Encodes one sentence given as one id stream per factor.
template <typename T>
EncoderOutput<T> encode_sentence(const FactoredTransformer<T>& model,
                                 const std::vector<std::vector<int>>& source) {
  Graph<T> g(false);
  return model.encode(g, SourceBatch::single(source), ForwardContext{});
}

/// Log-probabilities of the next token after each prefix (all of equal
/// length and BOS-led), from one batched decoder pass.
template <typename T>
std::vector<std::vector<double>> next_token_log_probs(const FactoredTransformer<T>& model,
                                                      const EncoderOutput<T>& enc,
                                                      const std::vector<std::vector<int>>& prefixes) {
  const std::size_t n = prefixes.size(), len = prefixes.front().size();
  std::vector<int> flat;
  flat.reserve(n * len);
  for (const auto& p : prefixes) flat.insert(flat.end(), p.begin(), p.end());
  Graph<T> g(false);
  const auto memory = n == 1 ? enc : enc.repeat_first(n);
  auto logits = model.decode(g, memory, flat, n, len, ForwardContext{});
  const std::size_t V = logits.cols();
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; ++b) out.push_back(log_probs(logits.ptr() + (b * len + len - 1) * V, V));
  return out;
}

/// Repeatedly appends the most probable token until EOS or max_len.
template <typename T>
Hypothesis greedy_decode(const FactoredTransformer<T>& model, const EncoderOutput<T>& enc,
                         std::size_t max_len) {
  Hypothesis h;
  std::vector<int> prefix{Vocabulary::kBos};
  while (h.tokens.size() < max_len) {
    const auto lp = next_token_log_probs(model, enc, {prefix}).front();
    int best = -1;
    for (std::size_t j = 0; j < lp.size(); ++j) {
      if (!is_generable(static_cast<int>(j))) continue;
      if (best < 0 || lp[j] > lp[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    h.tokens.push_back(best);
    h.log_prob += lp[static_cast<std::size_t>(best)];
    prefix.push_back(best);
    if (best == Vocabulary::kEos) break;
  }
  h.finished = true;
  return h;
}

/// Beam search. Each step expands every live hypothesis and keeps the
/// beam_size best candidates by cumulative log-probability; candidates ending
/// in EOS (or reaching max_len) move to the finished pool, which holds the
/// beam_size best by length-normalised score. Search stops once no live
/// hypothesis can still beat the best finished one. For beam_size > 1 the
/// greedy hypothesis is entered into the finished pool as well, so the result
/// never scores below greedy decoding.
template <typename T>
Hypothesis beam_search(const FactoredTransformer<T>& model, const EncoderOutput<T>& enc,
                       const DecodeOptions& opts) {
  if (opts.beam_size == 0) throw ConfigError("beam_size must be at least 1");
  if (opts.max_len == 0) throw ConfigError("max_len must be at least 1");
  const double alpha = opts.length_penalty;
  std::vector<Hypothesis> finished;
  auto add_finished = [&](Hypothesis h) {
    h.finished = true;
    finished.push_back(std::move(h));
    std::stable_sort(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
      return a.score(alpha) > b.score(alpha);
    });
    if (finished.size() > opts.beam_size) finished.resize(opts.beam_size);
  };
  if (opts.beam_size > 1) add_finished(greedy_decode(model, enc, opts.max_len));

  std::vector<Hypothesis> live(1);
  for (std::size_t t = 1; t <= opts.max_len && !live.empty(); ++t) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : live) {
      std::vector<int> p{Vocabulary::kBos};
      p.insert(p.end(), h.tokens.begin(), h.tokens.end());
      prefixes.push_back(std::move(p));
    }
    const auto lps = next_token_log_probs(model, enc, prefixes);

    struct Candidate {
      double log_prob;
      std::size_t parent;
      int token;
    };
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h)
      for (std::size_t j = 0; j < lps[h].size(); ++j)
        if (is_generable(static_cast<int>(j)))
          cands.push_back({live[h].log_prob + lps[h][j], h, static_cast<int>(j)});
    const std::size_t keep = std::min(opts.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis h = live[cands[c].parent];
      h.tokens.push_back(cands[c].token);
      h.log_prob = cands[c].log_prob;
      if (cands[c].token == Vocabulary::kEos || t == opts.max_len)
        add_finished(std::move(h));
      else
        next.push_back(std::move(h));
    }
    live = std::move(next);

    if (!finished.empty() && !live.empty()) {
      // Log-probabilities only fall as hypotheses grow, so a live
      // hypothesis can at best reach log_prob / max_len^alpha.
      double bound = -std::numeric_limits<double>::infinity();
      for (const auto& h : live) {
        const double b = alpha > 0.0 && h.log_prob < 0.0
                             ? h.log_prob / std::pow(static_cast<double>(opts.max_len), alpha)
                             : h.log_prob;
        bound = std::max(bound, b);
      }
      if (finished.front().score(alpha) >= bound) break;
    }
  }
  return finished.front();
}

/// Translates one sentence given as one id stream per factor. An empty
/// source yields an empty hypothesis and a warning. Output length is capped
/// so the decoder input (BOS plus tokens) fits the model's max_len.
template <typename T>
Hypothesis translate(const FactoredTransformer<T>& model,
                     const std::vector<std::vector<int>>& source, const DecodeOptions& opts,
                     Warnings* warnings = nullptr) {
  if (source.empty() || source.front().empty()) {
    warn(warnings, "translate: empty source sentence");
    Hypothesis h;
    h.finished = true;
    return h;
  }
  DecodeOptions o = opts;
  o.max_len = std::min(o.max_len, model.config().max_len - 1);
  const auto enc = encode_sentence(model, source);
  return beam_search(model, enc, o);
}

}  // namespace fnmt
