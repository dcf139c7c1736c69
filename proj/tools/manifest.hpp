// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// Content hashes and JSON manifests written next to every artifact.

#pragma once

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>

#include "fnmt/error.hpp"
#include "json.hpp"

namespace fnmt::tool {

inline std::string sha1_hex(std::string_view prefix, std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, prefix.data(), prefix.size()) == 1 &&
                  EVP_DigestUpdate(ctx, data.data(), data.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_sha1(const std::filesystem::path& path) {
  return sha1_hex("", read_file(path));
}

/// Object id git would give the file as a blob.
inline std::string git_blob_sha1(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  const std::string header = "blob " + std::to_string(data.size()) + std::string(1, '\0');
  return sha1_hex(header, data);
}

class Manifest {
 public:
  Manifest(std::string command, std::string config_text, std::uint64_t seed)
      : config_text_(std::move(config_text)) {
    doc_["command"] = std::move(command);
    doc_["seed"] = seed;
    doc_["config_sha1"] = sha1_hex("", config_text_);
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    std::size_t start = 0;
    while (start < config_text_.size()) {
      auto end = config_text_.find('\n', start);
      if (end == std::string::npos) end = config_text_.size();
      const std::string line = config_text_.substr(start, end - start);
      if (const auto eq = line.find('='); eq != std::string::npos)
        cfg[line.substr(0, eq)] = line.substr(eq + 1);
      start = end + 1;
    }
    doc_["config"] = std::move(cfg);
    doc_["inputs"] = nlohmann::ordered_json::object();
    doc_["outputs"] = nlohmann::ordered_json::object();
  }

  void input(const std::filesystem::path& path) {
    doc_["inputs"][path.string()] = file_sha1(path);
  }
  void output(const std::filesystem::path& path) {
    doc_["outputs"][path.string()] = git_blob_sha1(path);
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  std::string config_text_;
  nlohmann::ordered_json doc_;
};

}  // namespace fnmt::tool
