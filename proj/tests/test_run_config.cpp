// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fnmt/cli/run_config.hpp"

namespace fnmt::cli {
namespace {

namespace fs = std::filesystem;

std::string model_lines(const RunConfig& c) {
  std::string out;
  for (const auto& line : text::split(c.to_text(), '\n')) {
    for (const char* k : {"layers_enc=", "layers_dec=", "heads=", "d_model=", "d_ffn=",
                          "dropout=", "label_smoothing=", "token_batch="})
      if (line.rfind(k, 0) == 0) out += line + "\n";
  }
  return out;
}

TEST(PresetTest, IwsltSnapshot) {
  RunConfig c;
  c.apply_preset("iwslt-de-en");
  EXPECT_EQ(model_lines(c),
            "d_ffn=1024\n"
            "d_model=512\n"
            "dropout=0.3\n"
            "heads=4\n"
            "label_smoothing=0.1\n"
            "layers_dec=6\n"
            "layers_enc=6\n"
            "token_batch=4000\n");
}

TEST(PresetTest, FloresSnapshot) {
  RunConfig c;
  c.apply_preset("flores-en-ne");
  EXPECT_EQ(model_lines(c),
            "d_ffn=2048\n"
            "d_model=512\n"
            "dropout=0.1\n"
            "heads=2\n"
            "label_smoothing=0.2\n"
            "layers_dec=5\n"
            "layers_enc=5\n"
            "token_batch=4000\n");
}

TEST(PresetTest, UnknownNamesRejected) {
  RunConfig c;
  EXPECT_THROW(c.apply_preset("wmt"), ConfigError);
  EXPECT_THROW(c.apply_row("2enc"), ConfigError);
}

TEST(RunConfigTest, RowsSetArchitectureAndStreams) {
  RunConfig c;
  c.apply_row("nenc-concat-lemmas");
  EXPECT_EQ(c.arch, Architecture::NEncoders);
  EXPECT_EQ(c.combine, Combination::Concat);
  EXPECT_EQ(c.streams, (std::vector<std::string>{"word", "lemma"}));
  EXPECT_EQ(grid_rows().size(), 7u);
}

TEST(RunConfigTest, FileOrderAndOverrides) {
  const auto path = fs::temp_directory_path() / "fnmt_run_config.cfg";
  std::ofstream(path) << "# toy run\n"
                         "heads = 2   # fewer heads\n"
                         "preset=iwslt-de-en\n"
                         "row=1enc-concat-lemmas\n"
                         "factor_dim.word=384\n"
                         "factor_dim.lemma=128\n"
                         "factor.lemma=data/train.lemma\n"
                         "\n"
                         "seed=9\n";
  RunConfig c;
  c.load_file(path);
  EXPECT_EQ(c.heads, 2u);
  EXPECT_EQ(c.d_ffn, 1024u);
  EXPECT_EQ(c.combine, Combination::Concat);
  EXPECT_EQ(c.factors.at("lemma"), "data/train.lemma");
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_NO_THROW(c.validate());
  const auto m = c.model_config({100, 50}, 80);
  EXPECT_EQ(m.factors[0].embed_dim, 384u);
  EXPECT_EQ(m.encoder_dim(), 512u);

  c.set("heads", "4");
  EXPECT_EQ(c.heads, 4u);
  EXPECT_THROW(c.set("heads", "-1"), ConfigError);
  EXPECT_THROW(c.set("dropout", "lots"), ConfigError);
  EXPECT_THROW(c.set("colour", "red"), ConfigError);

  std::ofstream(path) << "heads\n";
  RunConfig bad;
  EXPECT_THROW(bad.load_file(path), ParseError);
}

TEST(RunConfigTest, ConcatNeedsExplicitDims) {
  RunConfig c;
  c.apply_row("1enc-concat-lemmas");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfigTest, SubwordTagsWithNEncodersRejected) {
  RunConfig c;
  c.apply_row("nenc-sum-lemmas");
  c.set("strategy", "subword-tags");
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("not compatible with the N-encoders"), std::string::npos);
  }
  c.set("arch", "1enc");
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigTest, TextIsSortedAndComplete) {
  RunConfig c;
  const auto lines = text::split(c.to_text(), '\n');
  std::vector<std::string> keys;
  for (const auto& l : lines)
    if (!l.empty()) keys.push_back(l.substr(0, l.find('=')));
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  RunConfig d;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    const auto eq = l.find('=');
    const auto k = l.substr(0, eq), v = l.substr(eq + 1);
    if ((k == "preset" || k == "row") && v.empty()) continue;
    d.set(k, v);
  }
  EXPECT_EQ(d.to_text(), c.to_text());
}

}  // namespace
}  // namespace fnmt::cli
