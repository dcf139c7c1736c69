// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

/// Token <-> id map. Ids 0..3 are reserved for PAD, BOS, EOS and UNK; every
/// other id names exactly one token.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReservedCount = 4;
  static constexpr std::array<std::string_view, kReservedCount> kReserved = {
      "<pad>", "<s>", "</s>", "<unk>"};

  Vocabulary() {
    for (auto r : kReserved) insert(std::string(r), 0);
  }

  static bool is_reserved(std::string_view token) {
    return std::find(kReserved.begin(), kReserved.end(), token) != kReserved.end();
  }

  /// Keeps every token whose count reaches `threshold`, ordered by descending
  /// count and then lexicographically.
  static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts,
                                std::size_t threshold) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts)
      if (n >= threshold && !is_reserved(tok)) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second > b.second;
    });
    Vocabulary v;
    for (auto& [tok, n] : kept) v.insert(tok, n);
    return v;
  }

  static Vocabulary build(const std::vector<text::Tokens>& corpus,
                          std::size_t threshold = 0) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : corpus)
      for (const auto& t : s) ++counts[t];
    return from_counts(counts, threshold);
  }

  /// Reads "token<TAB>frequency" lines in the order written.
  static Vocabulary load(const std::filesystem::path& path) {
    Vocabulary v;
    std::size_t lineno = 0;
    for (const auto& line : text::read_lines(path)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos || tab == 0) {
        throw ParseError(lineno, "vocab entry needs token<TAB>frequency: '" + line + "'");
      }
      std::size_t freq = 0;
      try {
        freq = std::stoull(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw ParseError(lineno, "bad frequency in vocab entry '" + line + "'");
      }
      std::string tok = line.substr(0, tab);
      if (is_reserved(tok)) continue;
      if (v.contains(tok)) throw ParseError(lineno, "duplicate vocab entry '" + tok + "'");
      v.insert(std::move(tok), freq);
    }
    return v;
  }

  /// Writes non-reserved entries, highest frequency first.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    std::vector<std::size_t> order;
    for (std::size_t i = kReservedCount; i < tokens_.size(); ++i) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return freqs_[a] > freqs_[b];
    });
    for (auto i : order) out << tokens_[i] << '\t' << freqs_[i] << '\n';
  }

  /// Adds a token if absent; returns its id.
  int add(const std::string& token, std::size_t freq = 0) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    return insert(token, freq);
  }

  bool contains(std::string_view token) const {
    return index_.find(std::string(token)) != index_.end();
  }

  int id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw VocabError("id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t frequency(int id) const { return freqs_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const text::Tokens& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  /// Maps ids back to tokens, dropping PAD/BOS/EOS.
  text::Tokens decode(std::span<const int> ids) const {
    text::Tokens out;
    for (int i : ids) {
      if (i == kPad || i == kBos || i == kEos) continue;
      out.push_back(token(i));
    }
    return out;
  }

  /// Rebuilds a vocabulary from its token list (as stored in checkpoints).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i < kReservedCount) {
        if (tokens[i] != kReserved[i]) {
          throw LoadError("vocabulary does not start with the reserved tokens");
        }
        continue;
      }
      v.insert(tokens[i], 0);
    }
    return v;
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  int insert(std::string token, std::size_t freq) {
    const int id = static_cast<int>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(std::move(token));
    freqs_.push_back(freq);
    return id;
  }

  std::vector<std::string> tokens_;
  std::vector<std::size_t> freqs_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace fnmt
