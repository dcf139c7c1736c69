// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

/// Sentences [first, last) of a corpus, `chars` code points long including
/// one separator between consecutive sentences.
struct Chunk {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t chars = 0;

  bool operator==(const Chunk&) const = default;
};

/// Greedy packing of whole sentences into chunks of at most `max_chars`
/// characters, preserving corpus order.
inline std::vector<Chunk> chunk_corpus(const std::vector<std::string>& sentences,
                                       std::size_t max_chars) {
  std::vector<Chunk> chunks;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const std::size_t len = text::utf8_length(sentences[i]);
    if (len > max_chars) {
      throw InputError("sentence " + std::to_string(i) + " has " + std::to_string(len) +
                       " characters, more than the chunk limit of " +
                       std::to_string(max_chars));
    }
    if (!chunks.empty() && chunks.back().chars + 1 + len <= max_chars) {
      chunks.back().last = i + 1;
      chunks.back().chars += 1 + len;
    } else {
      chunks.push_back({i, i + 1, len});
    }
  }
  return chunks;
}

}  // namespace fnmt
