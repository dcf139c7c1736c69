// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Reader for tagger output in a CoNLL-U subset. Sentences are separated by
// blank lines; token lines carry the tab-separated columns
//
//   ID FORM LEMMA UPOS FEATS HEAD DEPREL [ignored...]
//
// Lines with exactly ten columns are read as full CoNLL-U instead
// (ID FORM LEMMA UPOS XPOS FEATS HEAD DEPREL DEPS MISC). Comment lines,
// multiword ranges ("3-4") and empty nodes ("5.1") are skipped.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/factors/corpus.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

struct TaggedToken {
  std::string form;
  std::string lemma;
  std::string upos;
  std::string feats = "_";
  int head = 0;
  std::string deprel;

  bool operator==(const TaggedToken&) const = default;
};

using TaggedSentence = std::vector<TaggedToken>;

/// Universal POS tags.
inline constexpr std::array<std::string_view, 17> kUposTags = {
    "ADJ", "ADP",  "ADV",  "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

inline bool is_upos(std::string_view tag) {
  return std::find(kUposTags.begin(), kUposTags.end(), tag) != kUposTags.end();
}

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

inline std::vector<TaggedSentence> parse_tagged(std::istream& in, Warnings* warnings = nullptr) {
  std::vector<TaggedSentence> out;
  TaggedSentence cur;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    if (line[0] == '#') continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() < 7) {
      throw ParseError(lineno, "expected at least 7 tab-separated columns, got " +
                                   std::to_string(cols.size()));
    }
    const auto& id = cols[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    int idnum = 0;
    if (!detail::parse_int(id, idnum) || idnum < 1) {
      throw ParseError(lineno, "bad token id '" + id + "'");
    }
    if (idnum != static_cast<int>(cur.size()) + 1) {
      throw ParseError(lineno, "token id " + id + " out of sequence");
    }
    const bool full = cols.size() == 10;
    TaggedToken tok;
    tok.form = cols[1];
    tok.lemma = cols[2];
    tok.upos = cols[3];
    tok.feats = full ? cols[5] : cols[4];
    const auto& head = full ? cols[6] : cols[5];
    tok.deprel = full ? cols[7] : cols[6];
    if (!detail::parse_int(head, tok.head) || tok.head < 0) {
      throw ParseError(lineno, "bad head '" + head + "'");
    }
    if (tok.form.empty()) throw ParseError(lineno, "empty form");
    if (tok.feats.empty()) tok.feats = "_";
    if (!is_upos(tok.upos)) {
      warn(warnings, "line " + std::to_string(lineno) + ": unknown UPOS tag '" + tok.upos + "'");
    }
    cur.push_back(std::move(tok));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<TaggedSentence> read_tagged(const std::filesystem::path& path,
                                               Warnings* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_tagged(in, warnings);
}

/// Factor streams pulled from tagged sentences, in this order.
inline constexpr std::array<std::string_view, 4> kTaggedFactors = {"lemma", "upos", "feats",
                                                                   "deprel"};

/// Pairs tagger output with the tokenized corpus it was produced from and
/// returns the corpus with lemma, upos, feats and deprel factor streams.
inline FactoredCorpus extract_factors(const std::vector<TaggedSentence>& tagged,
                                      const std::vector<text::Tokens>& corpus) {
  if (tagged.size() != corpus.size()) {
    throw InputError("tagged file has " + std::to_string(tagged.size()) +
                     " sentences, corpus has " + std::to_string(corpus.size()));
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (tagged[i].size() != corpus[i].size()) {
      throw InputError("sentence " + std::to_string(i) + ": tagger produced " +
                       std::to_string(tagged[i].size()) + " tokens, corpus line has " +
                       std::to_string(corpus[i].size()));
    }
  }
  FactoredCorpus fc(corpus);
  for (auto name : kTaggedFactors) {
    std::vector<text::Tokens> streams;
    streams.reserve(tagged.size());
    for (const auto& sent : tagged) {
      text::Tokens s;
      for (const auto& tok : sent) {
        if (name == "lemma")
          s.push_back(tok.lemma);
        else if (name == "upos")
          s.push_back(tok.upos);
        else if (name == "feats")
          s.push_back(tok.feats);
        else
          s.push_back(tok.deprel);
      }
      streams.push_back(std::move(s));
    }
    fc.add_factor(std::string(name), std::move(streams));
  }
  return fc;
}

}  // namespace fnmt
