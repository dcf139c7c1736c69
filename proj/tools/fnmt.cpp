// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

// fnmt: command-line entry point for the factored translation pipeline.

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fnmt/bpe/bpe.hpp"
#include "fnmt/cli/run_config.hpp"
#include "fnmt/eval/bleu.hpp"
#include "fnmt/eval/decoding.hpp"
#include "fnmt/factors/align.hpp"
#include "fnmt/factors/chunk.hpp"
#include "fnmt/factors/conllu.hpp"
#include "fnmt/factors/synsets.hpp"
#include "fnmt/model/checkpoint.hpp"
#include "fnmt/model/grad_suite.hpp"
#include "fnmt/train/trainer.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using fnmt::cli::RunConfig;
namespace tool = fnmt::tool;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

void report_warnings(const fnmt::Warnings& w) {
  for (const auto& m : w.messages) std::cerr << "warning: " << m << '\n';
}

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw fnmt::ConfigError(std::string(flag) + " expects name=value, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

fs::path manifest_path(const fs::path& artifact) { return artifact.string() + ".manifest.json"; }

std::string params_text(const std::map<std::string, std::string>& params) {
  std::string out;
  for (const auto& [k, v] : params) out += k + "=" + v + "\n";
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw fnmt::InputError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

// ---------------------------------------------------------------------------
// Run-configuration flags shared by show-config, train, translate and grid.

struct RunFlags {
  std::optional<std::string> config_file;
  std::map<std::string, std::optional<std::string>> scalars;
  std::vector<std::string> factors, valid_factors, factor_dims;
  bool dry_run = false;

  struct Flag {
    std::string flag, key, help;
  };

  static const std::vector<Flag>& table() {
    static const std::vector<Flag> t = {
        {"--preset", "preset", "hyperparameter preset: iwslt-de-en | flores-en-ne"},
        {"--row", "row", "grid row naming arch, combine and streams"},
        {"--arch", "arch", "1enc | nenc"},
        {"--combine", "combine", "sum | concat"},
        {"--streams", "streams", "comma-separated source streams, word first"},
        {"--layers", "layers", "encoder and decoder layers"},
        {"--layers-enc", "layers_enc", "encoder layers"},
        {"--layers-dec", "layers_dec", "decoder layers"},
        {"--heads", "heads", "attention heads"},
        {"--d-model", "d_model", "model width"},
        {"--d-ffn", "d_ffn", "feed-forward width"},
        {"--dropout", "dropout", "dropout probability"},
        {"--max-len", "max_len", "longest sequence the model accepts"},
        {"--token-batch", "token_batch", "padded source tokens per batch"},
        {"--label-smoothing", "label_smoothing", "label smoothing epsilon"},
        {"--lr", "lr", "peak learning rate"},
        {"--warmup", "warmup", "linear warmup steps"},
        {"--max-steps", "max_steps", "optimizer steps"},
        {"--seed", "seed", "random seed"},
        {"--eval-every", "eval_every", "steps between evaluations and checkpoints"},
        {"--vocab-threshold", "vocab_threshold", "minimum token frequency kept in vocabularies"},
        {"--precision", "precision", "f32 | f64"},
        {"--strategy", "strategy", "factor alignment: repeat | bpe-marker | subword-tags"},
        {"--beam", "beam", "beam size"},
        {"--decode-max-len", "decode_max_len", "most generated tokens per sentence"},
        {"--length-penalty", "length_penalty", "length normalisation exponent"},
        {"--corpus", "corpus", "source word (or subword) corpus"},
        {"--target", "target", "target corpus"},
        {"--valid-corpus", "valid_corpus", "validation source corpus"},
        {"--valid-target", "valid_target", "validation target corpus"},
        {"--checkpoint", "checkpoint", "model checkpoint to load"},
        {"--out", "out", "output path or directory"},
    };
    return t;
  }

  void attach(CLI::App* app, bool with_dry_run) {
    app->add_option("--config", config_file, "key=value configuration file");
    for (const auto& f : table()) app->add_option(f.flag, scalars[f.key], f.help);
    app->add_option("--factors", factors, "factor stream file, name=path (repeatable)");
    app->add_option("--valid-factors", valid_factors,
                    "validation factor stream file, name=path (repeatable)");
    app->add_option("--factor-dims", factor_dims, "factor embedding width, name=int (repeatable)");
    if (with_dry_run) app->add_flag("--dry-run", dry_run, "print the configuration and exit");
  }

  /// defaults < preset < row < config file < flags
  RunConfig resolve() const {
    RunConfig::Entries entries;
    if (config_file) entries = RunConfig::read_entries(*config_file);
    std::vector<std::string> factor_order;
    for (const auto& [k, v] : entries)
      if (k.rfind("factor.", 0) == 0) factor_order.push_back(k.substr(7));
    for (const auto& f : table()) {
      auto it = scalars.find(f.key);
      if (it != scalars.end() && it->second) entries.emplace_back(f.key, *it->second);
    }
    for (const auto& f : factors) {
      auto [name, path] = split_assignment(f, "--factors");
      factor_order.erase(std::remove(factor_order.begin(), factor_order.end(), name),
                         factor_order.end());
      factor_order.push_back(name);
      entries.emplace_back("factor." + name, path);
    }
    for (const auto& f : valid_factors) {
      auto [name, path] = split_assignment(f, "--valid-factors");
      entries.emplace_back("valid_factor." + name, path);
    }
    for (const auto& f : factor_dims) {
      auto [name, dim] = split_assignment(f, "--factor-dims");
      entries.emplace_back("factor_dim." + name, dim);
    }
    RunConfig cfg;
    cfg.apply_entries(entries);

    const bool explicit_streams =
        !cfg.row.empty() || std::any_of(entries.begin(), entries.end(),
                                        [](const auto& e) { return e.first == "streams"; });
    if (!explicit_streams) {
      cfg.streams = {"word"};
      for (const auto& n : factor_order)
        if (n != "word") cfg.streams.push_back(n);
    }
    const std::string tags(fnmt::kSubwordTagFactor);
    if (cfg.strategy == fnmt::AlignmentStrategy::SubwordTags &&
        std::find(cfg.streams.begin(), cfg.streams.end(), tags) == cfg.streams.end()) {
      cfg.streams.push_back(tags);
    }
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Corpus loading.

/// Source streams named by `streams`: the word corpus, factor files, and the
/// subword tag stream derived from the corpus when no file is given.
fnmt::FactoredCorpus load_source(const std::string& corpus,
                                 const std::map<std::string, std::string>& factor_files,
                                 const std::vector<std::string>& streams,
                                 tool::Manifest* manifest) {
  if (corpus.empty()) throw fnmt::ConfigError("missing --corpus");
  fnmt::FactoredCorpus fc(fnmt::text::read_tokenized(corpus));
  if (manifest) manifest->input(corpus);
  for (const auto& s : streams) {
    if (s == fnmt::kWordFactor) continue;
    auto it = factor_files.find(s);
    if (it != factor_files.end()) {
      fc.add_factor(s, fnmt::text::read_tokenized(it->second));
      if (manifest) manifest->input(it->second);
    } else if (s == fnmt::kSubwordTagFactor) {
      std::vector<fnmt::text::Tokens> tags;
      for (const auto& w : fc.words()) tags.push_back(fnmt::subword_tags(w));
      fc.add_factor(s, std::move(tags));
    } else {
      throw fnmt::ConfigError("stream '" + s + "' needs --factors " + s + "=<path>");
    }
  }
  return fc;
}

/// Drops pairs the model cannot hold; returns how many were dropped.
std::size_t drop_overlong(std::vector<fnmt::ParallelExample>& ex, std::size_t max_len) {
  const auto before = ex.size();
  ex.erase(std::remove_if(ex.begin(), ex.end(),
                          [&](const fnmt::ParallelExample& e) {
                            return e.source_length() == 0 || e.source_length() > max_len ||
                                   e.target.size() + 1 > max_len;
                          }),
           ex.end());
  return before - ex.size();
}

template <typename T>
std::vector<std::vector<int>> encode_source(const fnmt::FactoredTransformer<T>& model,
                                            const fnmt::ModelVocabularies& vocabs,
                                            const fnmt::FactoredCorpus& source, std::size_t i) {
  std::vector<std::vector<int>> streams;
  for (std::size_t k = 0; k < model.config().factors.size(); ++k)
    streams.push_back(vocabs.source[k].encode(source.stream(model.config().factors[k].name)[i]));
  return streams;
}

template <typename T>
std::vector<std::string> translate_corpus(const fnmt::FactoredTransformer<T>& model,
                                          const fnmt::ModelVocabularies& vocabs,
                                          const fnmt::FactoredCorpus& source,
                                          const fnmt::DecodeOptions& opts, bool strip) {
  std::vector<std::string> out;
  fnmt::Warnings w;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto h = fnmt::translate(model, encode_source(model, vocabs, source, i), opts, &w);
    auto tokens = vocabs.target.decode(h.output());
    if (strip) tokens = fnmt::strip_bpe(tokens, "@@", &w);
    out.push_back(fnmt::text::join(tokens));
  }
  report_warnings(w);
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainOutcome {
  fs::path checkpoint;
  std::size_t steps = 0;
  double best_loss = 0.0;
};

template <typename T>
TrainOutcome run_training(const RunConfig& cfg, const fs::path& dir, tool::Manifest& manifest,
                          bool verbose) {
  const auto source = load_source(cfg.corpus, cfg.factors, cfg.streams, &manifest);
  if (cfg.target.empty()) throw fnmt::ConfigError("missing --target");
  const auto target = fnmt::text::read_tokenized(cfg.target);
  manifest.input(cfg.target);

  fnmt::ModelVocabularies vocabs;
  std::vector<std::size_t> sizes;
  for (const auto& s : cfg.streams) {
    vocabs.source.push_back(fnmt::Vocabulary::build(source.stream(s), cfg.vocab_threshold));
    sizes.push_back(vocabs.source.back().size());
  }
  vocabs.target = fnmt::Vocabulary::build(target, cfg.vocab_threshold);
  const auto model_cfg = cfg.model_config(sizes, vocabs.target.size());
  model_cfg.validate();

  auto train_set = fnmt::encode_corpus(source, cfg.streams, vocabs.source, target, vocabs.target);
  if (auto n = drop_overlong(train_set, cfg.max_len)) {
    std::cerr << "warning: skipped " << n << " training pairs that are empty or exceed max_len "
              << cfg.max_len << '\n';
  }
  std::vector<fnmt::ParallelExample> valid_set;
  if (!cfg.valid_corpus.empty()) {
    const auto vs = load_source(cfg.valid_corpus, cfg.valid_factors, cfg.streams, &manifest);
    if (cfg.valid_target.empty()) throw fnmt::ConfigError("--valid-corpus needs --valid-target");
    const auto vt = fnmt::text::read_tokenized(cfg.valid_target);
    manifest.input(cfg.valid_target);
    valid_set = fnmt::encode_corpus(vs, cfg.streams, vocabs.source, vt, vocabs.target);
    drop_overlong(valid_set, cfg.max_len);
  }

  fnmt::FactoredTransformer<T> model(model_cfg, cfg.train.seed);
  fnmt::TrainHooks hooks;
  if (verbose) {
    hooks.on_eval = [](const fnmt::TrainMetrics& m) {
      std::fprintf(stderr, "step %zu  train_loss %.4f  lr %.3g  val_loss %.4f\n", m.step,
                   m.train_loss, m.lr, m.val_loss);
      return false;
    };
  }
  const auto result = fnmt::train(model, train_set, valid_set, cfg.train, {dir, &vocabs}, hooks);
  for (const char* f : {"checkpoint_best.bin", "checkpoint_last.bin", "metrics.tsv"})
    manifest.output(dir / f);
  return {dir / "checkpoint_best.bin", result.steps, result.best_loss};
}

std::uint32_t checkpoint_value_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char header[16] = {};
  in.read(header, sizeof(header));
  if (!in) throw fnmt::LoadError("cannot read checkpoint header of " + path.string());
  std::uint32_t bytes = 0;
  std::memcpy(&bytes, header + 12, sizeof(bytes));
  return bytes;
}

template <typename T>
std::vector<std::string> translate_file(const RunConfig& cfg, const fs::path& checkpoint,
                                        const std::string& corpus,
                                        const std::map<std::string, std::string>& factor_files,
                                        bool strip, tool::Manifest* manifest) {
  auto loaded = fnmt::load_checkpoint<T>(checkpoint);
  if (!loaded.vocabularies) throw fnmt::LoadError(checkpoint.string() + " has no vocabularies");
  std::vector<std::string> streams;
  for (const auto& f : loaded.model.config().factors) streams.push_back(f.name);
  const auto source = load_source(corpus, factor_files, streams, manifest);
  fnmt::DecodeOptions opts{cfg.beam, cfg.decode_max_len, cfg.length_penalty};
  return translate_corpus(loaded.model, *loaded.vocabularies, source, opts, strip);
}

std::vector<std::string> translate_any(const RunConfig& cfg, const fs::path& checkpoint,
                                       const std::string& corpus,
                                       const std::map<std::string, std::string>& factor_files,
                                       bool strip, tool::Manifest* manifest) {
  if (manifest) manifest->input(checkpoint);
  return checkpoint_value_bytes(checkpoint) == 8
             ? translate_file<double>(cfg, checkpoint, corpus, factor_files, strip, manifest)
             : translate_file<float>(cfg, checkpoint, corpus, factor_files, strip, manifest);
}

double bleu_of(const std::vector<std::string>& hyps, const fs::path& refs_path) {
  std::vector<fnmt::text::Tokens> h, r = fnmt::text::read_tokenized(refs_path);
  for (const auto& s : hyps) h.push_back(fnmt::text::split_ws(s));
  return fnmt::corpus_bleu(h, r).score;
}

// ---------------------------------------------------------------------------
// Subcommands.

struct LearnBpeArgs {
  std::vector<std::string> corpora;
  std::string merges;
  std::size_t symbols = 10000;
  std::size_t min_frequency = 2;
};

int learn_bpe_cmd(const LearnBpeArgs& a) {
  std::vector<fnmt::text::Tokens> corpus;
  for (const auto& c : a.corpora) {
    auto part = fnmt::text::read_tokenized(c);
    corpus.insert(corpus.end(), part.begin(), part.end());
  }
  fnmt::LearnBpeOptions opts;
  opts.min_frequency = a.min_frequency;
  const auto model = fnmt::learn_bpe(corpus, a.symbols, opts);
  model.save(a.merges);
  tool::Manifest m("learn-bpe",
                   params_text({{"min_frequency", std::to_string(a.min_frequency)},
                                {"symbols", std::to_string(a.symbols)}}),
                   0);
  for (const auto& c : a.corpora) m.input(c);
  m.output(a.merges);
  m.write(manifest_path(a.merges));
  std::cerr << "learned " << model.merges().size() << " merges\n";
  return kOk;
}

struct ApplyBpeArgs {
  std::string corpus, merges, vocab, out, emit_vocab;
  std::size_t vocab_threshold = 0;
};

int apply_bpe_cmd(const ApplyBpeArgs& a) {
  const auto model = fnmt::BpeModel::load(a.merges);
  tool::Manifest m("apply-bpe",
                   params_text({{"vocab_threshold", std::to_string(a.vocab_threshold)}}), 0);
  m.input(a.corpus);
  m.input(a.merges);
  std::optional<fnmt::Vocabulary> vocab;
  if (!a.vocab.empty()) {
    const auto loaded = fnmt::Vocabulary::load(a.vocab);
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = fnmt::Vocabulary::kReservedCount; i < loaded.size(); ++i)
      counts[loaded.tokens()[i]] = loaded.frequency(static_cast<int>(i));
    vocab = fnmt::Vocabulary::from_counts(counts, a.vocab_threshold);
    m.input(a.vocab);
  }
  std::vector<fnmt::text::Tokens> out;
  for (const auto& s : fnmt::text::read_tokenized(a.corpus))
    out.push_back(model.apply(s, vocab ? &*vocab : nullptr));
  fnmt::text::write_tokenized(a.out, out);
  m.output(a.out);
  if (!a.emit_vocab.empty()) {
    fnmt::Vocabulary::build(out, a.vocab_threshold).save(a.emit_vocab);
    m.output(a.emit_vocab);
  }
  m.write(manifest_path(a.out));
  return kOk;
}

struct IngestArgs {
  std::string tagged, corpus, out;
};

int ingest_tags_cmd(const IngestArgs& a) {
  fnmt::Warnings w;
  const auto tagged = fnmt::read_tagged(a.tagged, &w);
  const auto fc = fnmt::extract_factors(tagged, fnmt::text::read_tokenized(a.corpus));
  report_warnings(w);
  tool::Manifest m("ingest-tags", "", 0);
  m.input(a.tagged);
  m.input(a.corpus);
  for (const auto& name : fc.factor_names()) {
    const fs::path p = a.out + "." + name;
    fnmt::text::write_tokenized(p, fc.factor(name));
    m.output(p);
  }
  m.write(manifest_path(a.out));
  return kOk;
}

struct ChunkArgs {
  std::string corpus, out;
  std::size_t max_chars = 0;
};

int chunk_cmd(const ChunkArgs& a) {
  const auto lines = fnmt::text::read_lines(a.corpus);
  const auto chunks = fnmt::chunk_corpus(lines, a.max_chars);
  tool::Manifest m("chunk", params_text({{"max_chars", std::to_string(a.max_chars)}}), 0);
  m.input(a.corpus);
  const fs::path index = a.out + ".index.tsv";
  std::vector<std::string> rows;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), ".%04zu.txt", k);
    const fs::path p = a.out + name;
    write_lines(p, std::vector<std::string>(lines.begin() + static_cast<std::ptrdiff_t>(chunks[k].first),
                                            lines.begin() + static_cast<std::ptrdiff_t>(chunks[k].last)));
    m.output(p);
    rows.push_back(std::to_string(k) + "\t" + std::to_string(chunks[k].first) + "\t" +
                   std::to_string(chunks[k].last) + "\t" + std::to_string(chunks[k].chars));
  }
  write_lines(index, rows);
  m.output(index);
  m.write(manifest_path(a.out));
  std::cerr << chunks.size() << " chunks\n";
  return kOk;
}

struct SynsetArgs {
  std::string tagged, spans, out;
};

int resolve_synsets_cmd(const SynsetArgs& a) {
  fnmt::Warnings w;
  const auto tagged = fnmt::read_tagged(a.tagged, &w);
  const auto streams = fnmt::resolve_corpus_synsets(tagged, fnmt::read_synset_spans(a.spans), &w);
  report_warnings(w);
  fnmt::text::write_tokenized(a.out, streams);
  tool::Manifest m("resolve-synsets", "", 0);
  m.input(a.tagged);
  m.input(a.spans);
  m.output(a.out);
  m.write(manifest_path(a.out));
  return kOk;
}

struct AlignArgs {
  std::string corpus, subwords, merges, strategy = "repeat", out;
  std::vector<std::string> factors;
};

int align_cmd(const AlignArgs& a) {
  const auto strategy = fnmt::parse_alignment_strategy(a.strategy);
  tool::Manifest m("align", params_text({{"strategy", a.strategy}}), 0);
  fnmt::FactoredCorpus words(fnmt::text::read_tokenized(a.corpus));
  m.input(a.corpus);
  for (const auto& f : a.factors) {
    auto [name, path] = split_assignment(f, "--factors");
    words.add_factor(name, fnmt::text::read_tokenized(path));
    m.input(path);
  }
  std::vector<fnmt::text::Tokens> subwords;
  if (!a.subwords.empty()) {
    subwords = fnmt::text::read_tokenized(a.subwords);
    m.input(a.subwords);
  } else if (!a.merges.empty()) {
    const auto bpe = fnmt::BpeModel::load(a.merges);
    for (const auto& s : words.words()) subwords.push_back(bpe.apply(s));
    m.input(a.merges);
    const fs::path p = a.out + ".word";
    fnmt::text::write_tokenized(p, subwords);
    m.output(p);
  } else {
    throw fnmt::ConfigError("align needs --subwords or --merges");
  }
  const auto aligned = fnmt::align_corpus(words, subwords, strategy);
  for (const auto& name : aligned.factor_names()) {
    const fs::path p = a.out + "." + name;
    fnmt::text::write_tokenized(p, aligned.factor(name));
    m.output(p);
  }
  m.write(manifest_path(a.out));
  return kOk;
}

int show_config_cmd(const RunFlags& f) {
  const auto cfg = f.resolve();
  cfg.validate();
  std::cout << cfg.to_text();
  // only an explicit --out flag names a file here; "out" from a config file
  // is the training directory
  const auto& out = f.scalars.at("out");
  if (out) {
    std::ofstream(*out) << cfg.to_text();
    tool::Manifest m("show-config", cfg.to_text(), cfg.train.seed);
    if (f.config_file) m.input(*f.config_file);
    m.output(*out);
    m.write(manifest_path(*out));
  }
  return kOk;
}

int train_cmd(const RunFlags& f) {
  const auto cfg = f.resolve();
  cfg.validate();
  if (f.dry_run) {
    std::cout << cfg.to_text();
    return kOk;
  }
  if (cfg.out.empty()) throw fnmt::ConfigError("missing --out directory");
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  tool::Manifest m("train", cfg.to_text(), cfg.train.seed);
  const auto r = cfg.precision == "f64" ? run_training<double>(cfg, dir, m, true)
                                        : run_training<float>(cfg, dir, m, true);
  {
    std::ofstream(dir / "config.txt") << cfg.to_text();
  }
  m.output(dir / "config.txt");
  m.write(dir / "manifest.json");
  std::cerr << "trained " << r.steps << " steps, best loss " << r.best_loss << '\n';
  return kOk;
}

struct TranslateExtra {
  bool keep_bpe = false;
};

int translate_cmd(const RunFlags& f, const TranslateExtra& x) {
  const auto cfg = f.resolve();
  if (cfg.checkpoint.empty()) throw fnmt::ConfigError("missing --checkpoint");
  if (cfg.out.empty()) throw fnmt::ConfigError("missing --out");
  if (cfg.beam == 0) throw fnmt::ConfigError("--beam must be at least 1");
  tool::Manifest m("translate",
                   params_text({{"beam", std::to_string(cfg.beam)},
                                {"decode_max_len", std::to_string(cfg.decode_max_len)},
                                {"keep_bpe", x.keep_bpe ? "1" : "0"},
                                {"length_penalty", std::to_string(cfg.length_penalty)}}),
                   0);
  const auto hyps = translate_any(cfg, cfg.checkpoint, cfg.corpus, cfg.factors, !x.keep_bpe, &m);
  write_lines(cfg.out, hyps);
  m.output(cfg.out);
  m.write(manifest_path(cfg.out));
  return kOk;
}

struct BleuArgs {
  std::string hyp, ref, out;
};

int score_bleu_cmd(const BleuArgs& a) {
  const auto r = fnmt::corpus_bleu(fnmt::text::read_tokenized(a.hyp), fnmt::text::read_tokenized(a.ref));
  std::cout << r.format() << '\n';
  if (!a.out.empty()) {
    write_lines(a.out, {r.format()});
    tool::Manifest m("score-bleu", "", 0);
    m.input(a.hyp);
    m.input(a.ref);
    m.output(a.out);
    m.write(manifest_path(a.out));
  }
  return kOk;
}

int grad_check_cmd(std::uint64_t seed, const std::string& out) {
  bool ok = true;
  std::vector<std::string> lines;
  auto show = [&](const std::vector<fnmt::gradcheck::GradCase>& cases) {
    for (const auto& c : cases) {
      ok = ok && c.report.passed();
      char line[160];
      std::snprintf(line, sizeof(line), "%s  %-40s max_rel_err=%.3e  coords=%zu",
                    c.report.passed() ? "PASS" : "FAIL", c.name.c_str(), c.report.max_rel_error,
                    c.report.coordinates);
      std::puts(line);
      lines.emplace_back(line);
    }
  };
  show(fnmt::gradcheck::op_grad_cases(seed));
  show(fnmt::gradcheck::model_grad_cases(seed));
  if (!out.empty()) {
    write_lines(out, lines);
    tool::Manifest m("grad-check", "", seed);
    m.output(out);
    m.write(manifest_path(out));
  }
  return ok ? kOk : kFailure;
}

int grid_cmd(const RunFlags& f) {
  auto base = f.resolve();
  if (base.streams.size() != 2) {
    throw fnmt::ConfigError("grid needs exactly one factor besides the words (e.g. --factors lemma=path)");
  }
  if (base.valid_corpus.empty() || base.valid_target.empty()) {
    throw fnmt::ConfigError("grid needs --valid-corpus and --valid-target for scoring");
  }
  struct Cell {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Cell> cells;
  {
    RunConfig c = base;
    c.arch = fnmt::Architecture::OneEncoder;
    c.combine = fnmt::Combination::Sum;
    c.streams = {"word"};
    cells.push_back({"baseline", c});
  }
  for (auto arch : {fnmt::Architecture::OneEncoder, fnmt::Architecture::NEncoders}) {
    for (auto comb : {fnmt::Combination::Sum, fnmt::Combination::Concat}) {
      RunConfig c = base;
      c.arch = arch;
      c.combine = comb;
      if (comb == fnmt::Combination::Concat) {
        const std::size_t each =
            arch == fnmt::Architecture::OneEncoder ? base.d_model / 2 : base.d_model;
        for (const auto& s : c.streams)
          if (!c.factor_dims.count(s)) c.factor_dims[s] = each;
      } else {
        c.factor_dims.clear();
      }
      cells.push_back({std::string(fnmt::to_string(arch)) + "-" +
                           std::string(fnmt::to_string(comb)) + "-" + base.streams[1],
                       c});
    }
  }
  for (const auto& c : cells) c.cfg.validate();
  if (f.dry_run) {
    for (const auto& c : cells) std::cout << "[" << c.name << "]\n" << c.cfg.to_text();
    return kOk;
  }
  if (base.out.empty()) throw fnmt::ConfigError("missing --out directory");
  fs::create_directories(base.out);
  tool::Manifest gm("grid", base.to_text(), base.train.seed);
  std::vector<std::string> rows = {"cell\tarch\tcombine\tstreams\tsteps\tbest_loss\tbleu"};
  std::printf("%-24s %-5s %-7s %-12s %8s\n", "cell", "arch", "combine", "streams", "BLEU");
  for (const auto& c : cells) {
    const fs::path dir = fs::path(base.out) / c.name;
    fs::create_directories(dir);
    tool::Manifest m("train", c.cfg.to_text(), c.cfg.train.seed);
    const auto r = c.cfg.precision == "f64" ? run_training<double>(c.cfg, dir, m, false)
                                            : run_training<float>(c.cfg, dir, m, false);
    m.write(dir / "manifest.json");
    const auto hyps =
        translate_any(c.cfg, r.checkpoint, c.cfg.valid_corpus, c.cfg.valid_factors, true, nullptr);
    write_lines(dir / "valid.hyp", hyps);
    const double bleu = bleu_of(hyps, c.cfg.valid_target);
    const std::string streams = fnmt::text::join(c.cfg.streams, "+");
    std::printf("%-24s %-5s %-7s %-12s %8.2f\n", c.name.c_str(),
                std::string(fnmt::to_string(c.cfg.arch)).c_str(),
                std::string(fnmt::to_string(c.cfg.combine)).c_str(), streams.c_str(), bleu);
    char line[256];
    std::snprintf(line, sizeof(line), "%s\t%s\t%s\t%s\t%zu\t%.6f\t%.2f", c.name.c_str(),
                  std::string(fnmt::to_string(c.cfg.arch)).c_str(),
                  std::string(fnmt::to_string(c.cfg.combine)).c_str(), streams.c_str(), r.steps,
                  r.best_loss, bleu);
    rows.push_back(line);
    gm.output(dir / "manifest.json");
    gm.output(dir / "valid.hyp");
  }
  const fs::path table = fs::path(base.out) / "grid.tsv";
  write_lines(table, rows);
  gm.output(table);
  gm.write(fs::path(base.out) / "manifest.json");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fnmt: factored Transformer translation toolkit"};
  app.require_subcommand(1);
  int status = kOk;

  LearnBpeArgs lb;
  auto* learn = app.add_subcommand("learn-bpe", "learn BPE merge operations");
  learn->add_option("--corpus", lb.corpora, "tokenized training text (repeatable)")->required();
  learn->add_option("--merges", lb.merges, "output merges file")->required();
  learn->add_option("--symbols", lb.symbols, "number of merge operations")->capture_default_str();
  learn->add_option("--min-frequency", lb.min_frequency, "stop below this pair count")
      ->capture_default_str();
  learn->callback([&] { status = learn_bpe_cmd(lb); });

  ApplyBpeArgs ab;
  auto* apply = app.add_subcommand("apply-bpe", "segment a corpus into subwords");
  apply->add_option("--corpus", ab.corpus, "tokenized input text")->required();
  apply->add_option("--merges", ab.merges, "merges file")->required();
  apply->add_option("--vocab", ab.vocab, "restrict output to this vocabulary");
  apply->add_option("--vocab-threshold", ab.vocab_threshold, "minimum vocabulary frequency")
      ->capture_default_str();
  apply->add_option("--emit-vocab", ab.emit_vocab, "write the output's subword vocabulary");
  apply->add_option("--out", ab.out, "output subword text")->required();
  apply->callback([&] { status = apply_bpe_cmd(ab); });

  IngestArgs ig;
  auto* ingest = app.add_subcommand("ingest-tags", "extract factor streams from CoNLL-U output");
  ingest->add_option("--tagged", ig.tagged, "tagger output (CoNLL-U)")->required();
  ingest->add_option("--corpus", ig.corpus, "tokenized word corpus")->required();
  ingest->add_option("--out", ig.out, "output prefix; writes <out>.lemma, .upos, .feats, .deprel")
      ->required();
  ingest->callback([&] { status = ingest_tags_cmd(ig); });

  ChunkArgs ch;
  auto* chunk = app.add_subcommand("chunk", "split a corpus into size-limited chunks");
  chunk->add_option("--corpus", ch.corpus, "one sentence per line")->required();
  chunk->add_option("--max-chars", ch.max_chars, "characters per chunk")->required();
  chunk->add_option("--out", ch.out, "output prefix")->required();
  chunk->callback([&] { status = chunk_cmd(ch); });

  SynsetArgs sy;
  auto* syn = app.add_subcommand("resolve-synsets", "build the synset factor stream");
  syn->add_option("--tagged", sy.tagged, "tagger output (CoNLL-U)")->required();
  syn->add_option("--spans", sy.spans, "sentence<TAB>start<TAB>end<TAB>synset records")
      ->required();
  syn->add_option("--out", sy.out, "output synset stream")->required();
  syn->callback([&] { status = resolve_synsets_cmd(sy); });

  AlignArgs al;
  auto* align = app.add_subcommand("align", "align word-level factors to subwords");
  align->add_option("--corpus", al.corpus, "tokenized word corpus")->required();
  align->add_option("--subwords", al.subwords, "segmented corpus from apply-bpe");
  align->add_option("--merges", al.merges, "segment on the fly instead of --subwords");
  align->add_option("--factors", al.factors, "word-level factor stream, name=path (repeatable)");
  align->add_option("--strategy", al.strategy, "repeat | bpe-marker | subword-tags")
      ->capture_default_str();
  align->add_option("--out", al.out, "output prefix; writes <out>.<factor>")->required();
  align->callback([&] { status = align_cmd(al); });

  RunFlags show_flags;
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  show_flags.attach(show, false);
  show->callback([&] { status = show_config_cmd(show_flags); });

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "train a factored Transformer");
  train_flags.attach(train, true);
  train->callback([&] { status = train_cmd(train_flags); });

  RunFlags tr_flags;
  TranslateExtra tr_extra;
  auto* translate = app.add_subcommand("translate", "translate a corpus with a checkpoint");
  tr_flags.attach(translate, false);
  translate->add_flag("--keep-bpe", tr_extra.keep_bpe, "do not join subwords in the output");
  translate->callback([&] { status = translate_cmd(tr_flags, tr_extra); });

  BleuArgs bl;
  auto* bleu = app.add_subcommand("score-bleu", "corpus BLEU of hypotheses against references");
  bleu->add_option("--hyp", bl.hyp, "hypotheses, one per line")->required();
  bleu->add_option("--ref", bl.ref, "references, one per line")->required();
  bleu->add_option("--out", bl.out, "also write the report here");
  bleu->callback([&] { status = score_bleu_cmd(bl); });

  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every op and model");
  gc->add_option("--seed", gc_seed, "random seed")->capture_default_str();
  std::string gc_out;
  gc->add_option("--out", gc_out, "also write the report here");
  gc->callback([&] { status = grad_check_cmd(gc_seed, gc_out); });

  RunFlags grid_flags;
  auto* grid = app.add_subcommand("grid", "train and score the architecture/combination grid");
  grid_flags.attach(grid, true);
  grid->callback([&] { status = grid_cmd(grid_flags); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const fnmt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const fnmt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return status;
}
