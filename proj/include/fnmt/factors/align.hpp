// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/factors/corpus.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

/// How word-level factor values are carried onto subword tokens.
enum class AlignmentStrategy {
  Repeat,       ///< value repeated on every piece of the word
  BpeMarker,    ///< repeated, non-final copies carry the continuation marker
  SubwordTags,  ///< repeated, plus a B/I/E/O position factor
};

/// Name of the factor stream generated by AlignmentStrategy::SubwordTags.
inline constexpr std::string_view kSubwordTagFactor = "subword_tags";

inline std::string_view to_string(AlignmentStrategy s) {
  switch (s) {
    case AlignmentStrategy::Repeat: return "repeat";
    case AlignmentStrategy::BpeMarker: return "bpe-marker";
    case AlignmentStrategy::SubwordTags: return "subword-tags";
  }
  return "?";
}

inline AlignmentStrategy parse_alignment_strategy(std::string_view s) {
  if (s == "repeat") return AlignmentStrategy::Repeat;
  if (s == "bpe-marker") return AlignmentStrategy::BpeMarker;
  if (s == "subword-tags") return AlignmentStrategy::SubwordTags;
  throw ConfigError("unknown alignment strategy '" + std::string(s) +
                    "' (expected repeat, bpe-marker or subword-tags)");
}

/// Index of the originating word for every subword piece.
inline std::vector<std::size_t> subword_word_index(const text::Tokens& subwords,
                                                   std::string_view marker = "@@") {
  std::vector<std::size_t> out;
  out.reserve(subwords.size());
  std::size_t word = 0;
  for (const auto& p : subwords) {
    out.push_back(word);
    if (!text::ends_with(p, marker)) ++word;
  }
  return out;
}

/// B/I/E/O position of each piece inside its word.
inline text::Tokens subword_tags(const text::Tokens& subwords, std::string_view marker = "@@") {
  text::Tokens tags;
  tags.reserve(subwords.size());
  bool inside = false;
  for (const auto& p : subwords) {
    const bool continues = text::ends_with(p, marker);
    if (!inside)
      tags.emplace_back(continues ? "B" : "O");
    else
      tags.emplace_back(continues ? "I" : "E");
    inside = continues;
  }
  return tags;
}

struct AlignedFactor {
  text::Tokens values;
  /// Only for AlignmentStrategy::SubwordTags.
  std::optional<text::Tokens> tags;
};

/// Carries a word-level factor stream onto the subword segmentation of the
/// same sentence. Output streams have one value per subword.
inline AlignedFactor align_to_subwords(const text::Tokens& words, const text::Tokens& factor,
                                       const text::Tokens& subwords, AlignmentStrategy strategy,
                                       std::string_view marker = "@@") {
  if (factor.size() != words.size()) {
    throw AlignmentError("factor stream has " + std::to_string(factor.size()) +
                         " values for " + std::to_string(words.size()) + " words");
  }
  if (!subwords.empty() && text::ends_with(subwords.back(), marker)) {
    throw AlignmentError("subword " + std::to_string(subwords.size() - 1) +
                         " ends with a dangling continuation marker");
  }
  const auto owner = subword_word_index(subwords, marker);
  const std::size_t covered = subwords.empty() ? 0 : owner.back() + 1;
  if (covered != words.size()) {
    throw AlignmentError("subword stream of " + std::to_string(subwords.size()) +
                         " pieces spans " + std::to_string(covered) + " words, expected " +
                         std::to_string(words.size()));
  }
  AlignedFactor out;
  out.values.reserve(subwords.size());
  for (std::size_t i = 0; i < subwords.size(); ++i) {
    const bool continues = text::ends_with(subwords[i], marker);
    std::string v = factor[owner[i]];
    if (strategy == AlignmentStrategy::BpeMarker && continues) v += marker;
    out.values.push_back(std::move(v));
  }
  if (strategy == AlignmentStrategy::SubwordTags) out.tags = subword_tags(subwords, marker);
  return out;
}

/// Re-expresses a word-level factored corpus at subword level. The subword
/// corpus becomes the word stream; every factor is aligned, and SubwordTags
/// adds a "subword_tags" factor.
inline FactoredCorpus align_corpus(const FactoredCorpus& words,
                                   const std::vector<text::Tokens>& subwords,
                                   AlignmentStrategy strategy, std::string_view marker = "@@") {
  if (subwords.size() != words.size()) {
    throw AlignmentError("subword corpus has " + std::to_string(subwords.size()) +
                         " sentences, word corpus has " + std::to_string(words.size()));
  }
  FactoredCorpus out(subwords);
  for (const auto& name : words.factor_names()) {
    std::vector<text::Tokens> aligned;
    aligned.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      try {
        aligned.push_back(align_to_subwords(words.words(i), words.factor(name)[i], subwords[i],
                                            strategy, marker)
                              .values);
      } catch (const AlignmentError& e) {
        throw AlignmentError("sentence " + std::to_string(i) + ", factor '" + name +
                             "': " + e.what());
      }
    }
    out.add_factor(name, std::move(aligned));
  }
  if (strategy == AlignmentStrategy::SubwordTags) {
    std::vector<text::Tokens> tags;
    tags.reserve(subwords.size());
    for (const auto& s : subwords) tags.push_back(subword_tags(s, marker));
    out.add_factor(std::string(kSubwordTagFactor), std::move(tags));
  }
  return out;
}

}  // namespace fnmt
