// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint container, little-endian:
//
//   "FNMTCKPT" u32 version u32 value_bytes(4|8)
//   str config                      (ModelConfig key=value text)
//   u64 n_vocabs { str name, u64 n, str token * n } * n_vocabs
//   u64 n_params { str name, u32 rank, u64 dim * rank, value * numel } * n_params
//   "FNMTEND!"
//
// where str is a u64 byte length followed by the bytes.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fnmt/bpe/vocabulary.hpp"
#include "fnmt/model/factored_transformer.hpp"

namespace fnmt {

inline constexpr char kCheckpointMagic[8] = {'F', 'N', 'M', 'T', 'C', 'K', 'P', 'T'};
inline constexpr char kCheckpointTrailer[8] = {'F', 'N', 'M', 'T', 'E', 'N', 'D', '!'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Source vocabularies in factor order plus the target vocabulary.
struct ModelVocabularies {
  std::vector<Vocabulary> source;
  Vocabulary target;
};

template <typename T>
struct LoadedCheckpoint {
  FactoredTransformer<T> model;
  std::optional<ModelVocabularies> vocabularies;
};

namespace detail {

class ByteWriter {
 public:
  template <typename V>
  void pod(V v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(V));
  }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  template <typename V>
  V pod() {
    V v;
    need(sizeof(V));
    std::memcpy(&v, buf_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw LoadError("checkpoint is truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
void save_checkpoint(const FactoredTransformer<T>& model, const std::filesystem::path& path,
                     const ModelVocabularies* vocabs = nullptr) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(sizeof(T));
  w.str(model.config().to_text());
  if (vocabs) {
    w.pod<std::uint64_t>(vocabs->source.size() + 1);
    auto put = [&](const std::string& name, const Vocabulary& v) {
      w.str(name);
      w.pod<std::uint64_t>(v.size());
      for (const auto& t : v.tokens()) w.str(t);
    };
    for (std::size_t i = 0; i < vocabs->source.size(); ++i)
      put("source." + model.config().factors.at(i).name, vocabs->source[i]);
    put("target", vocabs->target);
  } else {
    w.pod<std::uint64_t>(0);
  }
  w.pod<std::uint64_t>(model.parameters().size());
  for (const auto& [name, t] : model.parameters()) {
    w.str(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.pod<std::uint64_t>(d);
    w.raw(t.ptr(), t.size() * sizeof(T));
  }
  w.raw(kCheckpointTrailer, sizeof(kCheckpointTrailer));

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Reads a checkpoint into a model of precision T. The whole file is
/// validated before a model is returned.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r(std::move(buf));

  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw LoadError(path.string() + " is not a checkpoint");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto value_bytes = r.pod<std::uint32_t>();
  if (value_bytes != 4 && value_bytes != 8) {
    throw LoadError("checkpoint stores " + std::to_string(value_bytes) + "-byte values");
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_text(r.str());
    config.validate();
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  }

  std::map<std::string, std::vector<std::string>> vocab_tokens;
  const auto n_vocabs = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_vocabs; ++i) {
    std::string name = r.str();
    const auto n = r.pod<std::uint64_t>();
    std::vector<std::string> toks;
    for (std::uint64_t k = 0; k < n; ++k) toks.push_back(r.str());
    vocab_tokens.emplace(std::move(name), std::move(toks));
  }

  std::map<std::string, std::pair<Shape, std::vector<T>>> tensors;
  const auto n_params = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 8) throw LoadError("parameter " + name + " has bad rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.pod<std::uint64_t>());
    const std::size_t n = numel(shape);
    std::vector<T> values(n);
    if (value_bytes == sizeof(T)) {
      r.raw(values.data(), n * sizeof(T));
    } else if (value_bytes == 4) {
      std::vector<float> tmp(n);
      r.raw(tmp.data(), n * 4);
      for (std::size_t k = 0; k < n; ++k) values[k] = static_cast<T>(tmp[k]);
    } else {
      std::vector<double> tmp(n);
      r.raw(tmp.data(), n * 8);
      for (std::size_t k = 0; k < n; ++k) values[k] = static_cast<T>(tmp[k]);
    }
    tensors.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
  }
  char trailer[8];
  r.raw(trailer, sizeof(trailer));
  if (std::memcmp(trailer, kCheckpointTrailer, sizeof(trailer)) != 0 || !r.at_end()) {
    throw LoadError("checkpoint trailer missing or corrupt");
  }

  FactoredTransformer<T> model(config, 0);
  if (tensors.size() != model.parameters().size()) {
    throw LoadError("checkpoint has " + std::to_string(tensors.size()) +
                    " parameters, config implies " + std::to_string(model.parameters().size()));
  }
  for (auto& [name, t] : model.parameters()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw LoadError("checkpoint lacks parameter " + name);
    if (it->second.first != t.shape()) {
      throw LoadError("parameter " + name + " has shape " + to_string(it->second.first) +
                      ", config implies " + to_string(t.shape()));
    }
    std::copy(it->second.second.begin(), it->second.second.end(), t.data().begin());
  }

  LoadedCheckpoint<T> out{std::move(model), std::nullopt};
  if (!vocab_tokens.empty()) {
    ModelVocabularies v;
    for (const auto& f : config.factors) {
      auto it = vocab_tokens.find("source." + f.name);
      if (it == vocab_tokens.end()) throw LoadError("checkpoint lacks vocabulary for " + f.name);
      v.source.push_back(Vocabulary::from_tokens(it->second));
      if (v.source.back().size() != f.vocab_size) {
        throw LoadError("vocabulary size of " + f.name + " disagrees with the config");
      }
    }
    auto it = vocab_tokens.find("target");
    if (it == vocab_tokens.end()) throw LoadError("checkpoint lacks the target vocabulary");
    v.target = Vocabulary::from_tokens(it->second);
    if (v.target.size() != config.target_vocab) {
      throw LoadError("target vocabulary size disagrees with the config");
    }
    out.vocabularies = std::move(v);
  }
  return out;
}

}  // namespace fnmt
