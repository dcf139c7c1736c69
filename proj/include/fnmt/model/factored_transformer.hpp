// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Transformer encoder-decoder whose source side reads several token-parallel
// streams (words plus linguistic factors).
//
// OneEncoder: every factor has its own embedding table; the scaled
// embeddings are combined, the positional encoding is added once to the
// combined vector, and a single encoder stack follows.
//
// NEncoders: every factor has a complete encoder (embedding, positional
// encoding, stack) and the encoder outputs are combined.
//
// Sum keeps the width at d_model; Concat widens it to the sum of the factor
// widths, and the decoder is built at that width.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fnmt/bpe/vocabulary.hpp"
#include "fnmt/model/config.hpp"
#include "fnmt/model/layers.hpp"

namespace fnmt {

/// Padded source ids: one [batch x length] row-major id matrix per factor,
/// all sharing the padding positions.
struct SourceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::vector<int>> ids;
  std::vector<unsigned char> padding;

  /// A single unpadded sentence.
  static SourceBatch single(const std::vector<std::vector<int>>& streams) {
    SourceBatch b;
    b.batch = 1;
    b.length = streams.empty() ? 0 : streams.front().size();
    b.ids = streams;
    b.padding.assign(b.length, 0);
    return b;
  }
};

/// Decoder input (BOS-prefixed) and output (EOS-terminated) ids, padded.
struct TargetBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> input;
  std::vector<int> output;
};

template <typename T>
struct EncoderOutput {
  Tensor<T> states;  // [batch*length x width]
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<unsigned char> padding;

  std::size_t dim() const { return states.cols(); }

  /// The states of sentence 0 repeated `n` times, without gradient tracking.
  EncoderOutput repeat_first(std::size_t n) const {
    EncoderOutput out;
    out.batch = n;
    out.length = length;
    const std::size_t d = dim();
    Tensor<T> s({n * length, d});
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(states.ptr(), length * d, s.ptr() + b * length * d);
    out.states = s;
    out.padding.resize(n * length);
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(padding.begin(), length, out.padding.begin() + b * length);
    return out;
  }
};

/// Sum or feature-axis concatenation of equally long representations, in
/// factor declaration order.
template <typename T>
Tensor<T> combine(Graph<T>& g, const std::vector<Tensor<T>>& parts, Combination strategy) {
  if (parts.empty()) throw ConfigError("combine: nothing to combine");
  if (strategy == Combination::Concat) return concat_features(g, parts);
  for (const auto& p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw ConfigError("combine: summed representations must share the same dimensionality, " +
                        to_string(parts.front().shape()) + " vs " + to_string(p.shape()));
    }
  }
  Tensor<T> acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = add(g, acc, parts[i]);
  return acc;
}

template <typename T>
class FactoredTransformer {
 public:
  FactoredTransformer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const auto& fs = config_.factors;
    for (const auto& f : fs) {
      src_embed_.push_back(params_.add(
          "src_embed." + f.name, init_uniform<T>({f.vocab_size, f.embed_dim}, f.embed_dim, rng)));
    }
    if (config_.arch == Architecture::OneEncoder) {
      encoders_.emplace_back();
      for (std::size_t l = 0; l < config_.layers_enc; ++l) {
        encoders_.back().emplace_back(params_, "encoder.layer." + std::to_string(l),
                                      config_.encoder_dim(), config_.d_ffn, config_.heads, rng);
      }
    } else {
      for (const auto& f : fs) {
        encoders_.emplace_back();
        for (std::size_t l = 0; l < config_.layers_enc; ++l) {
          encoders_.back().emplace_back(params_,
                                        "encoder." + f.name + ".layer." + std::to_string(l),
                                        f.embed_dim, config_.d_ffn, config_.heads, rng);
        }
      }
    }
    const std::size_t dd = config_.decoder_dim();
    tgt_embed_ = params_.add("tgt_embed", init_uniform<T>({config_.target_vocab, dd}, dd, rng));
    for (std::size_t l = 0; l < config_.layers_dec; ++l) {
      decoder_.emplace_back(params_, "decoder.layer." + std::to_string(l), dd, config_.d_ffn,
                            config_.heads, rng);
    }
    output_ = Linear<T>(params_, "output", dd, config_.target_vocab, rng);
  }

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  /// Scaled embedding lookup for factor `i`: table[ids] * sqrt(width).
  Tensor<T> embed_factor(Graph<T>& g, std::size_t i, std::span<const int> ids) const {
    const auto& f = config_.factors.at(i);
    try {
      return scale(g, embedding(g, src_embed_[i], ids), std::sqrt(T(f.embed_dim)));
    } catch (const VocabError& e) {
      throw VocabError("factor '" + f.name + "': " + e.what());
    }
  }

  /// Runs encoder stack `which` (0 for OneEncoder, the factor index for
  /// NEncoders) over already embedded, position-encoded input.
  Tensor<T> run_encoder_stack(Graph<T>& g, std::size_t which, Tensor<T> x, std::size_t batch,
                              std::size_t len, const AttentionMask& mask,
                              const ForwardContext& ctx) const {
    for (const auto& layer : encoders_.at(which)) x = layer(g, x, batch, len, mask, ctx);
    return x;
  }

  EncoderOutput<T> encode(Graph<T>& g, const SourceBatch& src, const ForwardContext& ctx) const {
    check_source(src);
    const std::size_t B = src.batch, L = src.length;
    AttentionMask mask;
    mask.key_padding = src.padding;
    EncoderOutput<T> out;
    out.batch = B;
    out.length = L;
    out.padding = src.padding;
    const std::size_t n = config_.factors.size();
    if (config_.arch == Architecture::OneEncoder) {
      std::vector<Tensor<T>> parts;
      for (std::size_t i = 0; i < n; ++i) parts.push_back(embed_factor(g, i, src.ids[i]));
      Tensor<T> x = combine(g, parts, config_.combine);
      x = add(g, x, positional_encoding<T>(L, x.cols(), B));
      x = ctx.drop(g, x);
      out.states = run_encoder_stack(g, 0, x, B, L, mask, ctx);
    } else {
      std::vector<Tensor<T>> parts;
      for (std::size_t i = 0; i < n; ++i) {
        Tensor<T> x = embed_factor(g, i, src.ids[i]);
        x = add(g, x, positional_encoding<T>(L, x.cols(), B));
        x = ctx.drop(g, x);
        parts.push_back(run_encoder_stack(g, i, x, B, L, mask, ctx));
      }
      out.states = combine(g, parts, config_.combine);
    }
    return out;
  }

  /// Logits [batch*length x target_vocab] for every decoder input position.
  Tensor<T> decode(Graph<T>& g, const EncoderOutput<T>& enc, std::span<const int> input,
                   std::size_t batch, std::size_t length, const ForwardContext& ctx) const {
    if (length > config_.max_len) {
      throw LengthError("target prefix of length " + std::to_string(length) +
                        " exceeds max_len " + std::to_string(config_.max_len));
    }
    if (input.size() != batch * length || enc.batch != batch) {
      throw DimensionError("decode: " + std::to_string(input.size()) + " ids for batch " +
                           std::to_string(batch) + " x length " + std::to_string(length) +
                           " against encoder batch " + std::to_string(enc.batch));
    }
    const std::size_t dd = config_.decoder_dim();
    Tensor<T> y;
    try {
      y = scale(g, embedding(g, tgt_embed_, input), std::sqrt(T(dd)));
    } catch (const VocabError& e) {
      throw VocabError(std::string("target: ") + e.what());
    }
    y = add(g, y, positional_encoding<T>(length, dd, batch));
    y = ctx.drop(g, y);
    AttentionMask memory_mask;
    memory_mask.key_padding = enc.padding;
    for (const auto& layer : decoder_)
      y = layer(g, y, batch, length, enc.states, enc.length, memory_mask, ctx);
    return output_(g, y);
  }

  /// Next-token logits [prefix_len x target_vocab] for a single BOS-led
  /// prefix against a single-sentence encoding.
  Tensor<T> decode_step(Graph<T>& g, const EncoderOutput<T>& enc,
                        std::span<const int> prefix) const {
    if (prefix.empty() || prefix.front() != Vocabulary::kBos) {
      throw InputError("decode_step: prefix must start with BOS");
    }
    return decode(g, enc, prefix, 1, prefix.size(), ForwardContext{});
  }

  /// The same weights in another precision (parameters are copied).
  template <typename U>
  FactoredTransformer<U> cast() const {
    FactoredTransformer<U> out(config_, 0);
    out.load_parameters_from(params_);
    return out;
  }

  /// Copies every parameter of `other` whose name and shape match; returns
  /// the names of parameters of this model that were not found.
  template <typename U>
  std::vector<std::string> load_parameters_from(const ParameterSet<U>& other) {
    std::vector<std::string> missing;
    for (auto& [name, t] : params_) {
      const Tensor<U>* src = other.find(name);
      if (!src || src->shape() != t.shape()) {
        missing.push_back(name);
        continue;
      }
      auto dst = t.data();
      auto s = src->data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s[i]);
    }
    return missing;
  }

 private:
  void check_source(const SourceBatch& src) const {
    if (src.ids.size() != config_.factors.size()) {
      throw InputError("model expects " + std::to_string(config_.factors.size()) +
                       " source streams, got " + std::to_string(src.ids.size()));
    }
    if (src.batch == 0 || src.length == 0) throw InputError("empty source batch");
    if (src.length > config_.max_len) {
      throw LengthError("source length " + std::to_string(src.length) + " exceeds max_len " +
                        std::to_string(config_.max_len));
    }
    for (std::size_t i = 0; i < src.ids.size(); ++i) {
      if (src.ids[i].size() != src.batch * src.length) {
        throw InputError("source stream '" + config_.factors[i].name + "' has " +
                         std::to_string(src.ids[i].size()) + " ids, expected " +
                         std::to_string(src.batch * src.length));
      }
    }
    if (src.padding.size() != src.batch * src.length) {
      throw InputError("source padding mask has the wrong size");
    }
  }

  ModelConfig config_;
  ParameterSet<T> params_;
  std::vector<Tensor<T>> src_embed_;
  std::vector<std::vector<EncoderLayer<T>>> encoders_;
  Tensor<T> tgt_embed_;
  std::vector<DecoderLayer<T>> decoder_;
  Linear<T> output_;
};

}  // namespace fnmt
