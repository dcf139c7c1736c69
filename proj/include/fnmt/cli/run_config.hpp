// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Flat run configuration shared by the command-line tool.
//
// Values are resolved in this order, later sources winning:
//   built-in defaults < --preset < --row < --config file < command-line flags
//
// Config files hold one key=value per line; '#' starts a comment. Keys are
// the flag names without dashes (arch, combine, heads, ...). Per-factor
// entries are written factor.<name>=<path> and factor_dim.<name>=<int>.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/factors/align.hpp"
#include "fnmt/factors/corpus.hpp"
#include "fnmt/model/config.hpp"
#include "fnmt/text/text.hpp"
#include "fnmt/train/trainer.hpp"

namespace fnmt::cli {

/// Hyperparameter presets of the two reference setups.
struct Preset {
  std::string_view name;
  std::size_t layers;
  std::size_t heads;
  std::size_t d_model;
  std::size_t d_ffn;
  std::optional<double> dropout;
  double label_smoothing;
  std::size_t token_batch;
};

inline constexpr Preset kPresets[] = {
    {"iwslt-de-en", 6, 4, 512, 1024, 0.3, 0.1, 4000},
    {"flores-en-ne", 5, 2, 512, 2048, std::nullopt, 0.2, 4000},
};

/// Rows of the architecture / feature comparison grid.
struct GridRow {
  std::string_view name;
  Architecture arch;
  Combination combine;
  std::vector<std::string> streams;
};

inline const std::vector<GridRow>& grid_rows() {
  static const std::vector<GridRow> rows = {
      {"baseline", Architecture::OneEncoder, Combination::Sum, {"word"}},
      {"lemmas-only", Architecture::OneEncoder, Combination::Sum, {"lemma"}},
      {"1enc-sum-lemmas", Architecture::OneEncoder, Combination::Sum, {"word", "lemma"}},
      {"1enc-sum-synsets", Architecture::OneEncoder, Combination::Sum, {"word", "synset"}},
      {"1enc-concat-lemmas", Architecture::OneEncoder, Combination::Concat, {"word", "lemma"}},
      {"nenc-concat-lemmas", Architecture::NEncoders, Combination::Concat, {"word", "lemma"}},
      {"nenc-sum-lemmas", Architecture::NEncoders, Combination::Sum, {"word", "lemma"}},
  };
  return rows;
}

struct RunConfig {
  std::string preset;
  std::string row;

  // model
  Architecture arch = Architecture::OneEncoder;
  Combination combine = Combination::Sum;
  std::vector<std::string> streams{"word"};
  std::map<std::string, std::size_t> factor_dims;
  std::size_t layers_enc = 6;
  std::size_t layers_dec = 6;
  std::size_t heads = 4;
  std::size_t d_model = 512;
  std::size_t d_ffn = 1024;
  double dropout = 0.1;
  std::size_t max_len = 256;

  // training
  TrainConfig train;
  std::size_t vocab_threshold = 0;

  // alignment
  AlignmentStrategy strategy = AlignmentStrategy::Repeat;

  // "f32" or "f64" training arithmetic
  std::string precision = "f32";

  // decoding
  std::size_t beam = 4;
  std::size_t decode_max_len = 128;
  double length_penalty = 1.0;

  // paths
  std::string corpus;
  std::string target;
  std::map<std::string, std::string> factors;
  std::string merges;
  std::string vocab;
  std::string valid_corpus;
  std::string valid_target;
  std::map<std::string, std::string> valid_factors;
  std::string checkpoint;
  std::string out;

  RunConfig() { train.warmup = 4000; }

  void apply_preset(std::string_view name) {
    for (const auto& p : kPresets) {
      if (p.name != name) continue;
      preset = std::string(name);
      layers_enc = layers_dec = p.layers;
      heads = p.heads;
      d_model = p.d_model;
      d_ffn = p.d_ffn;
      if (p.dropout) dropout = *p.dropout;
      train.label_smoothing = p.label_smoothing;
      train.token_batch = p.token_batch;
      return;
    }
    throw ConfigError("unknown preset '" + std::string(name) +
                      "' (expected iwslt-de-en or flores-en-ne)");
  }

  void apply_row(std::string_view name) {
    for (const auto& r : grid_rows()) {
      if (r.name != name) continue;
      row = std::string(name);
      arch = r.arch;
      combine = r.combine;
      streams = r.streams;
      return;
    }
    std::string known;
    for (const auto& r : grid_rows()) known += (known.empty() ? "" : ", ") + std::string(r.name);
    throw ConfigError("unknown row '" + std::string(name) + "' (expected one of " + known + ")");
  }

  /// Sets one key from a config file or flag.
  void set(const std::string& key, const std::string& value) {
    auto to_size = [&](const std::string& v) {
      std::size_t pos = 0;
      unsigned long long n = 0;
      try {
        n = std::stoull(v, &pos);
      } catch (const std::logic_error&) {
        pos = 0;
      }
      if (pos != v.size() || v.empty() || v[0] == '-') {
        throw ConfigError("'" + key + "' needs a non-negative integer, got '" + v + "'");
      }
      return static_cast<std::size_t>(n);
    };
    auto to_double = [&](const std::string& v) {
      std::size_t pos = 0;
      double d = 0;
      try {
        d = std::stod(v, &pos);
      } catch (const std::logic_error&) {
        pos = 0;
      }
      if (pos != v.size() || v.empty()) {
        throw ConfigError("'" + key + "' needs a number, got '" + v + "'");
      }
      return d;
    };
    if (key.rfind("factor.", 0) == 0) {
      factors[key.substr(7)] = value;
    } else if (key.rfind("valid_factor.", 0) == 0) {
      valid_factors[key.substr(13)] = value;
    } else if (key.rfind("factor_dim.", 0) == 0) {
      factor_dims[key.substr(11)] = to_size(value);
    } else if (key == "preset") {
      apply_preset(value);
    } else if (key == "row") {
      apply_row(value);
    } else if (key == "arch") {
      arch = parse_architecture(value);
    } else if (key == "combine") {
      combine = parse_combination(value);
    } else if (key == "streams") {
      streams = text::split(value, ',');
    } else if (key == "layers") {
      layers_enc = layers_dec = to_size(value);
    } else if (key == "layers_enc") {
      layers_enc = to_size(value);
    } else if (key == "layers_dec") {
      layers_dec = to_size(value);
    } else if (key == "heads") {
      heads = to_size(value);
    } else if (key == "d_model") {
      d_model = to_size(value);
    } else if (key == "d_ffn") {
      d_ffn = to_size(value);
    } else if (key == "dropout") {
      dropout = to_double(value);
    } else if (key == "max_len") {
      max_len = to_size(value);
    } else if (key == "token_batch") {
      train.token_batch = to_size(value);
    } else if (key == "label_smoothing") {
      train.label_smoothing = to_double(value);
    } else if (key == "lr") {
      train.lr = to_double(value);
    } else if (key == "warmup") {
      train.warmup = to_size(value);
    } else if (key == "max_steps") {
      train.max_steps = to_size(value);
    } else if (key == "seed") {
      train.seed = to_size(value);
    } else if (key == "eval_every") {
      train.eval_every = to_size(value);
    } else if (key == "adam_beta1") {
      train.adam.beta1 = to_double(value);
    } else if (key == "adam_beta2") {
      train.adam.beta2 = to_double(value);
    } else if (key == "adam_eps") {
      train.adam.eps = to_double(value);
    } else if (key == "vocab_threshold") {
      vocab_threshold = to_size(value);
    } else if (key == "precision") {
      if (value != "f32" && value != "f64") {
        throw ConfigError("precision must be f32 or f64, got '" + value + "'");
      }
      precision = value;
    } else if (key == "strategy") {
      strategy = parse_alignment_strategy(value);
    } else if (key == "beam") {
      beam = to_size(value);
    } else if (key == "decode_max_len") {
      decode_max_len = to_size(value);
    } else if (key == "length_penalty") {
      length_penalty = to_double(value);
    } else if (key == "corpus") {
      corpus = value;
    } else if (key == "target") {
      target = value;
    } else if (key == "merges") {
      merges = value;
    } else if (key == "vocab") {
      vocab = value;
    } else if (key == "valid_corpus") {
      valid_corpus = value;
    } else if (key == "valid_target") {
      valid_target = value;
    } else if (key == "checkpoint") {
      checkpoint = value;
    } else if (key == "out") {
      out = value;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  using Entries = std::vector<std::pair<std::string, std::string>>;

  static Entries read_entries(const std::filesystem::path& path) {
    Entries entries;
    std::size_t lineno = 0;
    for (auto line : text::read_lines(path)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      auto toks = text::split_ws(line);
      if (toks.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return entries;
  }

  /// Reads key=value lines. Preset and row lines are applied first so that
  /// explicit keys in the same file override them.
  void load_file(const std::filesystem::path& path) {
    apply_entries(read_entries(path));
  }

  void apply_entries(const Entries& entries) {
    for (const auto& [k, v] : entries)
      if (k == "preset") set(k, v);
    for (const auto& [k, v] : entries)
      if (k == "row") set(k, v);
    for (const auto& [k, v] : entries)
      if (k != "preset" && k != "row") set(k, v);
  }

  /// Width of factor `name`: its explicit dim, else d_model. Concatenation
  /// requires an explicit dim for every factor.
  std::size_t factor_dim(const std::string& name) const {
    auto it = factor_dims.find(name);
    if (it != factor_dims.end()) return it->second;
    if (combine == Combination::Concat) {
      throw ConfigError("concatenation needs --factor-dims " + name + "=<int> for every factor");
    }
    return d_model;
  }

  /// Model configuration for the given vocabulary sizes (one per stream).
  ModelConfig model_config(const std::vector<std::size_t>& source_vocab_sizes,
                           std::size_t target_vocab) const {
    if (source_vocab_sizes.size() != streams.size()) {
      throw ConfigError("need one vocabulary size per source stream");
    }
    ModelConfig m;
    m.arch = arch;
    m.combine = combine;
    for (std::size_t i = 0; i < streams.size(); ++i)
      m.factors.push_back({streams[i], source_vocab_sizes[i], factor_dim(streams[i])});
    m.target_vocab = target_vocab;
    m.layers_enc = layers_enc;
    m.layers_dec = layers_dec;
    m.heads = heads;
    m.d_model = d_model;
    m.d_ffn = d_ffn;
    m.dropout = dropout;
    m.max_len = max_len;
    return m;
  }

  /// Static checks that need no data: dims, divisibility, and the subword
  /// tag restriction (a subword-tags alignment adds a tag stream).
  void validate() const {
    std::vector<std::size_t> sizes(streams.size(), Vocabulary::kReservedCount + 1);
    ModelConfig m = model_config(sizes, Vocabulary::kReservedCount + 1);
    const bool has_tags =
        std::find(streams.begin(), streams.end(), std::string(kSubwordTagFactor)) != streams.end();
    if (strategy == AlignmentStrategy::SubwordTags && !has_tags) {
      m.factors.push_back({std::string(kSubwordTagFactor), Vocabulary::kReservedCount + 1,
                           factor_dims.count(std::string(kSubwordTagFactor))
                               ? factor_dims.at(std::string(kSubwordTagFactor))
                               : d_model});
    }
    m.validate();
    train.validate();
  }

  /// Expanded configuration, one key=value per line in sorted key order.
  std::string to_text() const {
    std::map<std::string, std::string> kv;
    auto num = [](double d) {
      std::ostringstream os;
      os << d;
      return os.str();
    };
    kv["preset"] = preset;
    kv["row"] = row;
    kv["arch"] = std::string(to_string(arch));
    kv["combine"] = std::string(to_string(combine));
    kv["streams"] = text::join(streams, ",");
    for (const auto& [n, d] : factor_dims) kv["factor_dim." + n] = std::to_string(d);
    kv["layers_enc"] = std::to_string(layers_enc);
    kv["layers_dec"] = std::to_string(layers_dec);
    kv["heads"] = std::to_string(heads);
    kv["d_model"] = std::to_string(d_model);
    kv["d_ffn"] = std::to_string(d_ffn);
    kv["dropout"] = num(dropout);
    kv["max_len"] = std::to_string(max_len);
    kv["token_batch"] = std::to_string(train.token_batch);
    kv["label_smoothing"] = num(train.label_smoothing);
    kv["lr"] = num(train.lr);
    kv["warmup"] = std::to_string(train.warmup);
    kv["max_steps"] = std::to_string(train.max_steps);
    kv["seed"] = std::to_string(train.seed);
    kv["eval_every"] = std::to_string(train.eval_every);
    kv["adam_beta1"] = num(train.adam.beta1);
    kv["adam_beta2"] = num(train.adam.beta2);
    kv["adam_eps"] = num(train.adam.eps);
    kv["vocab_threshold"] = std::to_string(vocab_threshold);
    kv["precision"] = precision;
    kv["strategy"] = std::string(to_string(strategy));
    kv["beam"] = std::to_string(beam);
    kv["decode_max_len"] = std::to_string(decode_max_len);
    kv["length_penalty"] = num(length_penalty);
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
  }
};

}  // namespace fnmt::cli
