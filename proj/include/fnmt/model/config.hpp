// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/factors/align.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

enum class Architecture { OneEncoder, NEncoders };
enum class Combination { Sum, Concat };

inline std::string_view to_string(Architecture a) {
  return a == Architecture::OneEncoder ? "1enc" : "nenc";
}
inline std::string_view to_string(Combination c) {
  return c == Combination::Sum ? "sum" : "concat";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "1enc") return Architecture::OneEncoder;
  if (s == "nenc") return Architecture::NEncoders;
  throw ConfigError("unknown architecture '" + std::string(s) + "' (expected 1enc or nenc)");
}

inline Combination parse_combination(std::string_view s) {
  if (s == "sum") return Combination::Sum;
  if (s == "concat") return Combination::Concat;
  throw ConfigError("unknown combination '" + std::string(s) + "' (expected sum or concat)");
}

struct FactorSpec {
  std::string name;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;

  bool is_subword_tags() const { return name == kSubwordTagFactor; }
  bool operator==(const FactorSpec&) const = default;
};

/// Architecture of a factored Transformer. The first factor is the source
/// word stream; the target side is never factored.
struct ModelConfig {
  Architecture arch = Architecture::OneEncoder;
  Combination combine = Combination::Sum;
  std::vector<FactorSpec> factors;
  std::size_t target_vocab = 0;
  std::size_t layers_enc = 6;
  std::size_t layers_dec = 6;
  std::size_t heads = 4;
  std::size_t d_model = 512;
  std::size_t d_ffn = 1024;
  double dropout = 0.1;
  std::size_t max_len = 256;

  bool operator==(const ModelConfig&) const = default;

  /// Width of the combined encoder output, which is also the decoder width:
  /// d_model when summing, the sum of the factor widths when concatenating.
  std::size_t encoder_dim() const {
    if (combine == Combination::Sum) return d_model;
    std::size_t total = 0;
    for (const auto& f : factors) total += f.embed_dim;
    return total;
  }
  std::size_t decoder_dim() const { return encoder_dim(); }

  void validate() const {
    if (factors.empty()) throw ConfigError("model needs at least one source factor");
    for (const auto& f : factors) {
      if (f.name.empty()) throw ConfigError("factor with empty name");
      if (f.vocab_size == 0) throw ConfigError("factor '" + f.name + "' has an empty vocabulary");
      if (f.embed_dim == 0) throw ConfigError("factor '" + f.name + "' has zero embedding size");
    }
    for (std::size_t i = 0; i < factors.size(); ++i)
      for (std::size_t j = i + 1; j < factors.size(); ++j)
        if (factors[i].name == factors[j].name)
          throw ConfigError("factor '" + factors[i].name + "' declared twice");
    if (target_vocab == 0) throw ConfigError("target vocabulary is empty");
    if (layers_enc == 0 || layers_dec == 0) throw ConfigError("layer counts must be positive");
    if (heads == 0) throw ConfigError("heads must be positive");
    if (d_model == 0 || d_ffn == 0) throw ConfigError("d_model and d_ffn must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    if (max_len == 0) throw ConfigError("max_len must be positive");

    if (arch == Architecture::NEncoders) {
      for (const auto& f : factors) {
        if (f.is_subword_tags()) {
          throw ConfigError(
              "subword tags are not compatible with the N-encoders architecture; "
              "use --arch 1enc or a repeat/bpe-marker alignment");
        }
      }
    }
    if (combine == Combination::Sum) {
      for (const auto& f : factors) {
        if (f.embed_dim != d_model) {
          throw ConfigError("summed factors must share the same dimensionality: factor '" +
                            f.name + "' has size " + std::to_string(f.embed_dim) +
                            ", d_model is " + std::to_string(d_model));
        }
      }
    } else if (arch == Architecture::OneEncoder && encoder_dim() != d_model) {
      throw ConfigError("concatenated factor sizes add up to " + std::to_string(encoder_dim()) +
                        " but the decoder embedding size must equal the encoder's (d_model " +
                        std::to_string(d_model) + ")");
    }

    auto check_width = [&](std::size_t w, const std::string& what) {
      if (w % heads != 0) {
        throw ConfigError(what + " width " + std::to_string(w) + " is not divisible by " +
                          std::to_string(heads) + " heads");
      }
      if (w % 2 != 0) {
        throw ConfigError(what + " width " + std::to_string(w) +
                          " is odd; sinusoidal positions need an even width");
      }
    };
    if (arch == Architecture::NEncoders) {
      for (const auto& f : factors) check_width(f.embed_dim, "encoder '" + f.name + "'");
    } else {
      check_width(encoder_dim(), "encoder");
    }
    check_width(decoder_dim(), "decoder");
  }

  /// Flat key=value form used in checkpoints and manifests.
  std::vector<std::pair<std::string, std::string>> to_key_values() const {
    std::ostringstream fs;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i) fs << ',';
      fs << factors[i].name << ':' << factors[i].vocab_size << ':' << factors[i].embed_dim;
    }
    std::ostringstream drop;
    drop.precision(17);
    drop << dropout;
    return {{"arch", std::string(to_string(arch))},
            {"combine", std::string(to_string(combine))},
            {"factors", fs.str()},
            {"target_vocab", std::to_string(target_vocab)},
            {"layers_enc", std::to_string(layers_enc)},
            {"layers_dec", std::to_string(layers_dec)},
            {"heads", std::to_string(heads)},
            {"d_model", std::to_string(d_model)},
            {"d_ffn", std::to_string(d_ffn)},
            {"dropout", drop.str()},
            {"max_len", std::to_string(max_len)}};
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : to_key_values()) out += k + "=" + v + "\n";
    return out;
  }

  static ModelConfig from_text(const std::string& textual) {
    ModelConfig c;
    std::istringstream in(textual);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      try {
        if (key == "arch") c.arch = parse_architecture(value);
        else if (key == "combine") c.combine = parse_combination(value);
        else if (key == "factors") {
          c.factors.clear();
          for (const auto& item : text::split(value, ',')) {
            const auto parts = text::split(item, ':');
            if (parts.size() != 3) throw ParseError(lineno, "factor must be name:vocab:dim");
            c.factors.push_back({parts[0], std::stoull(parts[1]), std::stoull(parts[2])});
          }
        } else if (key == "target_vocab") c.target_vocab = std::stoull(value);
        else if (key == "layers_enc") c.layers_enc = std::stoull(value);
        else if (key == "layers_dec") c.layers_dec = std::stoull(value);
        else if (key == "heads") c.heads = std::stoull(value);
        else if (key == "d_model") c.d_model = std::stoull(value);
        else if (key == "d_ffn") c.d_ffn = std::stoull(value);
        else if (key == "dropout") c.dropout = std::stod(value);
        else if (key == "max_len") c.max_len = std::stoull(value);
        else throw ParseError(lineno, "unknown model key '" + key + "'");
      } catch (const std::logic_error&) {
        throw ParseError(lineno, "bad value for '" + key + "': '" + value + "'");
      }
    }
    return c;
  }
};

}  // namespace fnmt
