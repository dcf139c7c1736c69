// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Byte pair encoding: greedy merge learning over a word-frequency table and
// rank-ordered merge application, with the continuation marker written on
// every non-final piece of a word ("un@@ believ@@ able").

#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fnmt/bpe/vocabulary.hpp"
#include "fnmt/error.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

/// Appended to the last symbol of every word during learning and merging.
inline constexpr std::string_view kEndOfWord = "</w>";

using SymbolPair = std::pair<std::string, std::string>;

class BpeModel {
 public:
  BpeModel() = default;
  explicit BpeModel(std::vector<SymbolPair> merges, std::string marker = "@@",
                    std::size_t vocab_threshold = 0)
      : merges_(std::move(merges)),
        marker_(std::move(marker)),
        vocab_threshold_(vocab_threshold) {
    index();
  }

  const std::vector<SymbolPair>& merges() const { return merges_; }
  const std::string& marker() const { return marker_; }
  std::size_t vocab_threshold() const { return vocab_threshold_; }
  void set_vocab_threshold(std::size_t t) { vocab_threshold_ = t; }

  /// Learning-order rank of a pair, or npos.
  std::size_t rank(const std::string& left, const std::string& right) const {
    auto it = ranks_.find(key(left, right));
    return it == ranks_.end() ? std::string::npos : it->second;
  }

  /// Internal segmentation of one word: code points with the end-of-word
  /// sentinel attached to the last one, merged in rank order.
  std::vector<std::string> segment(const std::string& word) const {
    std::vector<std::string> sym = text::utf8_chars(word);
    if (sym.empty()) return sym;
    sym.back() += kEndOfWord;
    while (sym.size() > 1) {
      std::size_t best = std::string::npos;
      for (std::size_t i = 0; i + 1 < sym.size(); ++i)
        best = std::min(best, rank(sym[i], sym[i + 1]));
      if (best == std::string::npos) break;
      const auto& [left, right] = merges_[best];
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (i + 1 < sym.size() && sym[i] == left && sym[i + 1] == right) {
          next.push_back(left + right);
          ++i;
        } else {
          next.push_back(sym[i]);
        }
      }
      sym = std::move(next);
    }
    return sym;
  }

  /// Splits one word into output pieces. When `vocab` has entries beyond the
  /// reserved ones, pieces missing from it are split by undoing the merge
  /// that produced them; pieces that cannot be split further become <unk>.
  text::Tokens encode_word(const std::string& word, const Vocabulary* vocab) const {
    const bool check = vocab && vocab->size() > Vocabulary::kReservedCount;
    if (check && vocab->contains(word)) return {word};
    std::vector<std::string> sym = segment(word);
    text::Tokens out;
    for (std::size_t i = 0; i < sym.size(); ++i) {
      const bool final = i + 1 == sym.size();
      std::string piece = sym[i];
      if (final) piece.resize(piece.size() - kEndOfWord.size());
      if (!check) {
        out.push_back(final ? piece : piece + marker_);
      } else {
        split_to_vocab(piece, final, *vocab, out);
      }
    }
    return out;
  }

  text::Tokens apply(const text::Tokens& words, const Vocabulary* vocab = nullptr) const {
    text::Tokens out;
    for (const auto& w : words) {
      auto pieces = encode_word(w, vocab);
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
    return out;
  }

  /// "left right" per line, learning order.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    for (const auto& [l, r] : merges_) out << l << ' ' << r << '\n';
  }

  static BpeModel load(const std::filesystem::path& path, std::string marker = "@@") {
    std::vector<SymbolPair> merges;
    std::size_t lineno = 0;
    for (const auto& line : text::read_lines(path)) {
      ++lineno;
      if (line.empty()) continue;
      auto parts = text::split(line, ' ');
      if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
        throw ParseError(lineno, "merge must be 'left right': '" + line + "'");
      }
      merges.emplace_back(std::move(parts[0]), std::move(parts[1]));
    }
    return BpeModel(std::move(merges), std::move(marker));
  }

 private:
  static std::string key(const std::string& l, const std::string& r) {
    std::string k = l;
    k += '\x1f';
    k += r;
    return k;
  }

  void index() {
    ranks_.clear();
    producers_.clear();
    for (std::size_t i = 0; i < merges_.size(); ++i) {
      const auto& [l, r] = merges_[i];
      if (!ranks_.emplace(key(l, r), i).second) {
        throw InputError("duplicate merge '" + l + " " + r + "'");
      }
      producers_[l + r] = i;  // later merges win
    }
  }

  void split_to_vocab(const std::string& piece, bool final, const Vocabulary& vocab,
                      text::Tokens& out) const {
    const std::string surface = final ? piece : piece + marker_;
    if (vocab.contains(surface)) {
      out.push_back(surface);
      return;
    }
    const std::string internal = final ? piece + std::string(kEndOfWord) : piece;
    auto it = producers_.find(internal);
    if (it == producers_.end()) {
      std::string unk(Vocabulary::kReserved[Vocabulary::kUnk]);
      out.push_back(final ? unk : unk + marker_);
      return;
    }
    const auto& [left, right] = merges_[it->second];
    split_to_vocab(left, false, vocab, out);
    std::string r = right;
    if (final) r.resize(r.size() - kEndOfWord.size());
    split_to_vocab(r, final, vocab, out);
  }

  std::vector<SymbolPair> merges_;
  std::string marker_ = "@@";
  std::size_t vocab_threshold_ = 0;
  std::unordered_map<std::string, std::size_t> ranks_;
  std::unordered_map<std::string, std::size_t> producers_;
};

struct LearnBpeOptions {
  /// Learning stops early once the best pair occurs fewer times than this.
  std::size_t min_frequency = 2;
  std::string marker = "@@";
};

/// Word-frequency table keyed by word, each word as its initial symbols.
inline std::map<std::string, std::size_t> word_counts(const std::vector<text::Tokens>& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus)
    for (const auto& w : s) ++counts[w];
  return counts;
}

/// Greedy most-frequent-pair merging. Ties go to the lexicographically
/// smallest (left, right) pair. For a joint model pass both language sides.
inline BpeModel learn_bpe(const std::vector<text::Tokens>& corpus, std::size_t num_merges,
                          const LearnBpeOptions& opts = {}) {
  const auto counts = word_counts(corpus);
  if (counts.empty()) throw InputError("learn_bpe: empty corpus");

  struct Word {
    std::vector<std::string> sym;
    std::size_t freq;
  };
  std::vector<Word> words;
  for (const auto& [w, n] : counts) {
    auto sym = text::utf8_chars(w);
    sym.back() += kEndOfWord;
    words.push_back({std::move(sym), n});
  }

  std::vector<SymbolPair> merges;
  std::map<SymbolPair, std::size_t> pairs;
  while (merges.size() < num_merges) {
    pairs.clear();
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.sym.size(); ++i) pairs[{w.sym[i], w.sym[i + 1]}] += w.freq;
    // std::map iterates in lexicographic pair order, so the first maximum wins ties.
    const SymbolPair* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [p, n] : pairs) {
      if (n > best_count) {
        best = &p;
        best_count = n;
      }
    }
    if (!best || best_count < std::max<std::size_t>(opts.min_frequency, 1)) break;
    const SymbolPair chosen = *best;
    const std::string merged = chosen.first + chosen.second;
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.sym.size());
      for (std::size_t i = 0; i < w.sym.size(); ++i) {
        if (i + 1 < w.sym.size() && w.sym[i] == chosen.first && w.sym[i + 1] == chosen.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.sym[i]);
        }
      }
      w.sym = std::move(next);
    }
    merges.push_back(chosen);
  }
  return BpeModel(std::move(merges), opts.marker);
}

/// Subword vocabulary of a corpus segmented by `model`, thresholded by count.
inline Vocabulary build_subword_vocab(const BpeModel& model,
                                      const std::vector<text::Tokens>& corpus,
                                      std::size_t threshold) {
  std::vector<text::Tokens> segmented;
  segmented.reserve(corpus.size());
  for (const auto& s : corpus) segmented.push_back(model.apply(s));
  return Vocabulary::build(segmented, threshold);
}

/// Joins marker-suffixed pieces with their successors. A marker left dangling
/// at the end of the sentence is dropped with a warning.
inline text::Tokens strip_bpe(const text::Tokens& pieces, const std::string& marker = "@@",
                              Warnings* warnings = nullptr) {
  text::Tokens out;
  std::string cur;
  bool open = false;
  for (const auto& p : pieces) {
    if (text::ends_with(p, marker)) {
      cur += p.substr(0, p.size() - marker.size());
      open = true;
    } else {
      cur += p;
      out.push_back(std::move(cur));
      cur.clear();
      open = false;
    }
  }
  if (open) {
    warn(warnings, "strip_bpe: dangling continuation marker at end of sentence");
    if (!cur.empty()) out.push_back(std::move(cur));
  }
  return out;
}

}  // namespace fnmt
