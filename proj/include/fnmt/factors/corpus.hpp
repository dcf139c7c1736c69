// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

/// Name of the word stream when it is listed alongside factor streams.
inline constexpr std::string_view kWordFactor = "word";

/// Word streams plus named factor streams, token-parallel per sentence.
class FactoredCorpus {
 public:
  FactoredCorpus() = default;
  explicit FactoredCorpus(std::vector<text::Tokens> words) : words_(std::move(words)) {}

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

  const std::vector<text::Tokens>& words() const { return words_; }
  const text::Tokens& words(std::size_t sentence) const { return words_.at(sentence); }

  /// Factor names in the order they were added.
  const std::vector<std::string>& factor_names() const { return names_; }
  bool has_factor(const std::string& name) const { return factors_.count(name) != 0; }

  const std::vector<text::Tokens>& factor(const std::string& name) const {
    auto it = factors_.find(name);
    if (it == factors_.end()) throw InputError("unknown factor '" + name + "'");
    return it->second;
  }

  /// The named stream, where "word" resolves to the word stream.
  const std::vector<text::Tokens>& stream(const std::string& name) const {
    return name == kWordFactor ? words_ : factor(name);
  }

  /// Adds a factor stream; every sentence must match the word stream length.
  void add_factor(const std::string& name, std::vector<text::Tokens> streams) {
    if (name == kWordFactor) throw InputError("'word' is reserved for the word stream");
    if (has_factor(name)) throw InputError("factor '" + name + "' already present");
    if (streams.size() != words_.size()) {
      throw InputError("factor '" + name + "' has " + std::to_string(streams.size()) +
                       " sentences, corpus has " + std::to_string(words_.size()));
    }
    for (std::size_t i = 0; i < streams.size(); ++i) {
      if (streams[i].size() != words_[i].size()) {
        throw InputError("factor '" + name + "' sentence " + std::to_string(i) + " has " +
                         std::to_string(streams[i].size()) + " values for " +
                         std::to_string(words_[i].size()) + " tokens");
      }
    }
    names_.push_back(name);
    factors_.emplace(name, std::move(streams));
  }

  /// Reads a corpus file and its factor files (one sentence per line).
  static FactoredCorpus load(const std::filesystem::path& corpus,
                             const std::vector<std::pair<std::string, std::filesystem::path>>&
                                 factor_files) {
    FactoredCorpus fc(text::read_tokenized(corpus));
    for (const auto& [name, path] : factor_files) fc.add_factor(name, text::read_tokenized(path));
    return fc;
  }

 private:
  std::vector<text::Tokens> words_;
  std::vector<std::string> names_;
  std::map<std::string, std::vector<text::Tokens>> factors_;
};

}  // namespace fnmt
