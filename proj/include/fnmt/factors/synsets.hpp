// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Assigns word-sense identifiers from character-offset spans to tokens.
//
// Span offsets are 0-based code point positions into the sentence rebuilt by
// joining token forms with single spaces; char_end is exclusive. A span
// applies to the tokens it fully covers. Overlapping spans are resolved by
// priority: more covered tokens first, then the earlier start, then input
// order. A span is accepted only if none of its tokens was taken by a
// higher-priority span. Tokens left without a synset get their UPOS tag.

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/factors/conllu.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

struct SynsetSpan {
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string synset_id;

  bool operator==(const SynsetSpan&) const = default;
};

/// Tokens [first, last) covered by a span.
struct TokenRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first; }
  bool overlaps(const TokenRange& o) const { return first < o.last && o.first < last; }
  bool operator==(const TokenRange&) const = default;
};

/// Start/end code point offsets of each token in the space-joined sentence.
inline std::vector<std::pair<std::size_t, std::size_t>> token_offsets(
    const std::vector<std::string>& forms) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t pos = 0;
  for (const auto& f : forms) {
    const std::size_t len = text::utf8_length(f);
    out.emplace_back(pos, pos + len);
    pos += len + 1;
  }
  return out;
}

/// Tokens fully inside the span; nullopt when it covers none.
inline std::optional<TokenRange> snap_span(
    const std::vector<std::pair<std::size_t, std::size_t>>& offsets, const SynsetSpan& span) {
  std::optional<TokenRange> r;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i].first >= span.char_start && offsets[i].second <= span.char_end) {
      if (!r) r = TokenRange{i, i + 1};
      else r->last = i + 1;
    }
  }
  return r;
}

/// Synset factor value for every token of the sentence.
inline std::vector<std::string> resolve_synsets(const TaggedSentence& sentence,
                                                std::span<const SynsetSpan> spans,
                                                Warnings* warnings = nullptr) {
  std::vector<std::string> forms;
  forms.reserve(sentence.size());
  for (const auto& t : sentence) forms.push_back(t.form);
  const auto offsets = token_offsets(forms);
  const std::size_t sentence_len = offsets.empty() ? 0 : offsets.back().second;

  struct Candidate {
    TokenRange range;
    std::size_t order;
    const SynsetSpan* span;
  };
  std::vector<Candidate> candidates;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& s = spans[k];
    if (s.char_start >= s.char_end || s.char_end > sentence_len) {
      throw InputError("synset span [" + std::to_string(s.char_start) + "," +
                       std::to_string(s.char_end) + ") invalid for sentence of " +
                       std::to_string(sentence_len) + " characters");
    }
    auto range = snap_span(offsets, s);
    if (!range) {
      warn(warnings, "synset " + s.synset_id + " at [" + std::to_string(s.char_start) + "," +
                         std::to_string(s.char_end) + ") covers no whole token; discarded");
      continue;
    }
    candidates.push_back({*range, k, &s});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.range.size() != b.range.size()) return a.range.size() > b.range.size();
                     if (a.range.first != b.range.first) return a.range.first < b.range.first;
                     return a.order < b.order;
                   });

  std::vector<const SynsetSpan*> owner(sentence.size(), nullptr);
  for (const auto& c : candidates) {
    bool free = true;
    for (std::size_t i = c.range.first; i < c.range.last; ++i) free = free && !owner[i];
    if (!free) continue;
    for (std::size_t i = c.range.first; i < c.range.last; ++i) owner[i] = c.span;
  }

  std::vector<std::string> out;
  out.reserve(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i)
    out.push_back(owner[i] ? owner[i]->synset_id : sentence[i].upos);
  return out;
}

/// Reads "sentence_index<TAB>char_start<TAB>char_end<TAB>synset_id" records,
/// grouped by sentence in input order.
inline std::map<std::size_t, std::vector<SynsetSpan>> read_synset_spans(
    const std::filesystem::path& path) {
  std::map<std::size_t, std::vector<SynsetSpan>> out;
  std::size_t lineno = 0;
  std::size_t last_sentence = 0;
  for (const auto& line : text::read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() != 4) throw ParseError(lineno, "expected 4 tab-separated columns");
    std::size_t idx = 0, start = 0, end = 0;
    try {
      idx = std::stoull(cols[0]);
      start = std::stoull(cols[1]);
      end = std::stoull(cols[2]);
    } catch (const std::exception&) {
      throw ParseError(lineno, "non-numeric sentence index or offset");
    }
    if (idx < last_sentence) throw ParseError(lineno, "records not sorted by sentence");
    if (start >= end) throw ParseError(lineno, "char_start must be below char_end");
    if (cols[3].empty()) throw ParseError(lineno, "empty synset id");
    last_sentence = idx;
    out[idx].push_back({start, end, cols[3]});
  }
  return out;
}

/// Synset factor streams for a whole tagged corpus.
inline std::vector<text::Tokens> resolve_corpus_synsets(
    const std::vector<TaggedSentence>& tagged,
    const std::map<std::size_t, std::vector<SynsetSpan>>& spans, Warnings* warnings = nullptr) {
  if (!spans.empty() && spans.rbegin()->first >= tagged.size()) {
    throw InputError("synset spans reference sentence " + std::to_string(spans.rbegin()->first) +
                     " of a " + std::to_string(tagged.size()) + "-sentence corpus");
  }
  std::vector<text::Tokens> out;
  out.reserve(tagged.size());
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    auto it = spans.find(i);
    std::span<const SynsetSpan> s;
    if (it != spans.end()) s = it->second;
    out.push_back(resolve_synsets(tagged[i], s, warnings));
  }
  return out;
}

}  // namespace fnmt
