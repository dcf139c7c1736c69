// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "fnmt/bpe/vocabulary.hpp"
#include "fnmt/error.hpp"
#include "fnmt/factors/corpus.hpp"
#include "fnmt/model/factored_transformer.hpp"

namespace fnmt {

/// One sentence pair as ids: a source stream per factor (equal lengths) and
/// the target ids without BOS/EOS.
struct ParallelExample {
  std::vector<std::vector<int>> source;
  std::vector<int> target;

  std::size_t source_length() const { return source.empty() ? 0 : source.front().size(); }
};

struct Batch {
  SourceBatch source;
  TargetBatch target;
  /// Corpus indices of the sentences, in batch row order.
  std::vector<std::size_t> indices;

  /// Source tokens including padding.
  std::size_t padded_source_tokens() const { return source.batch * source.length; }
};

/// Encodes a factored corpus with one vocabulary per stream in `stream_names`
/// order ("word" selects the word stream).
inline std::vector<ParallelExample> encode_corpus(const FactoredCorpus& source,
                                                  const std::vector<std::string>& stream_names,
                                                  const std::vector<Vocabulary>& source_vocabs,
                                                  const std::vector<text::Tokens>& target,
                                                  const Vocabulary& target_vocab) {
  if (stream_names.size() != source_vocabs.size()) {
    throw ConfigError("need one source vocabulary per stream");
  }
  if (target.size() != source.size()) {
    throw InputError("source has " + std::to_string(source.size()) + " sentences, target has " +
                     std::to_string(target.size()));
  }
  std::vector<ParallelExample> out(source.size());
  for (std::size_t k = 0; k < stream_names.size(); ++k) {
    const auto& stream = source.stream(stream_names[k]);
    for (std::size_t i = 0; i < source.size(); ++i)
      out[i].source.push_back(source_vocabs[k].encode(stream[i]));
  }
  for (std::size_t i = 0; i < target.size(); ++i) out[i].target = target_vocab.encode(target[i]);
  return out;
}

/// Packs one batch from the given examples, in the given order.
inline Batch collate(const std::vector<ParallelExample>& examples,
                     const std::vector<std::size_t>& indices) {
  Batch b;
  b.indices = indices;
  const std::size_t n = indices.size();
  const std::size_t factors = examples.at(indices.front()).source.size();
  std::size_t src_len = 0, tgt_len = 0;
  for (auto i : indices) {
    src_len = std::max(src_len, examples[i].source_length());
    tgt_len = std::max(tgt_len, examples[i].target.size() + 1);
  }
  b.source.batch = n;
  b.source.length = src_len;
  b.source.ids.assign(factors, std::vector<int>(n * src_len, Vocabulary::kPad));
  b.source.padding.assign(n * src_len, 1);
  b.target.batch = n;
  b.target.length = tgt_len;
  b.target.input.assign(n * tgt_len, Vocabulary::kPad);
  b.target.output.assign(n * tgt_len, Vocabulary::kPad);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& ex = examples[indices[r]];
    for (std::size_t f = 0; f < factors; ++f)
      std::copy(ex.source[f].begin(), ex.source[f].end(), b.source.ids[f].begin() + r * src_len);
    std::fill_n(b.source.padding.begin() + r * src_len, ex.source_length(), 0);
    b.target.input[r * tgt_len] = Vocabulary::kBos;
    for (std::size_t t = 0; t < ex.target.size(); ++t) {
      b.target.input[r * tgt_len + t + 1] = ex.target[t];
      b.target.output[r * tgt_len + t] = ex.target[t];
    }
    b.target.output[r * tgt_len + ex.target.size()] = Vocabulary::kEos;
  }
  return b;
}

/// Sorts sentences by source length and packs them greedily so that each
/// batch holds at most `token_batch` source tokens counting padding. Every
/// sentence lands in exactly one batch.
inline std::vector<Batch> make_batches(const std::vector<ParallelExample>& examples,
                                       std::size_t token_batch) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.source.empty() || ex.source_length() == 0) {
      throw InputError("sentence " + std::to_string(i) + " has an empty source");
    }
    for (const auto& s : ex.source) {
      if (s.size() != ex.source_length()) {
        throw InputError("sentence " + std::to_string(i) + ": factor streams differ in length");
      }
    }
    if (ex.source.size() != examples.front().source.size()) {
      throw InputError("sentence " + std::to_string(i) + " has a different number of factors");
    }
    if (ex.source_length() > token_batch) {
      throw InputError("sentence " + std::to_string(i) + " has " +
                       std::to_string(ex.source_length()) +
                       " source tokens, more than the batch budget of " +
                       std::to_string(token_batch));
    }
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].source_length() < examples[b].source_length();
  });
  std::vector<Batch> batches;
  std::vector<std::size_t> cur;
  std::size_t cur_max = 0;
  for (auto i : order) {
    const std::size_t len = examples[i].source_length();
    const std::size_t next_max = std::max(cur_max, len);
    if (!cur.empty() && (cur.size() + 1) * next_max > token_batch) {
      batches.push_back(collate(examples, cur));
      cur.clear();
      cur_max = 0;
    }
    cur.push_back(i);
    cur_max = std::max(cur_max, len);
  }
  if (!cur.empty()) batches.push_back(collate(examples, cur));
  return batches;
}

}  // namespace fnmt
