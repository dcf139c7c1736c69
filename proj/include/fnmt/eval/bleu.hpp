// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "fnmt/error.hpp"
#include "fnmt/text/text.hpp"

namespace fnmt {

inline constexpr std::size_t kBleuOrder = 4;

/// Corpus-level n-gram statistics; BLEU is a function of their sums, so
/// they add up across sentences.
struct BleuStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
    return *this;
  }
};

struct BleuResult {
  double score = 0.0;  // 0..100
  std::array<double, kBleuOrder> precisions{};  // percentages
  double brevity_penalty = 0.0;
  BleuStats stats;

  /// "BLEU = 34.08, 70.1/45.2/30.1/20.0 (BP=1.000, ratio=1.012, hyp_len=.., ref_len=..)"
  std::string format() const {
    char buf[256];
    const double ratio = stats.ref_len
                             ? static_cast<double>(stats.hyp_len) / static_cast<double>(stats.ref_len)
                             : 0.0;
    std::snprintf(buf, sizeof(buf),
                  "BLEU = %.2f, %.1f/%.1f/%.1f/%.1f (BP=%.3f, ratio=%.3f, hyp_len=%zu, ref_len=%zu)",
                  score, precisions[0], precisions[1], precisions[2], precisions[3],
                  brevity_penalty, ratio, stats.hyp_len, stats.ref_len);
    return buf;
  }
};

/// Clipped n-gram matches of one hypothesis against one reference.
inline BleuStats sentence_stats(const text::Tokens& hyp, const text::Tokens& ref) {
  BleuStats s;
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      ++hyp_counts[std::vector<std::string>(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

/// BLEU-4 from accumulated statistics: geometric mean of the modified
/// precisions times the brevity penalty, unsmoothed. Orders for which the
/// hypotheses contain no n-grams at all are left out of the mean.
inline BleuResult bleu_from_stats(const BleuStats& s) {
  BleuResult r;
  r.stats = s;
  if (s.hyp_len == 0) return r;
  r.brevity_penalty =
      s.hyp_len > s.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  double log_sum = 0.0;
  std::size_t orders = 0;
  bool zero = false;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    if (s.totals[n] == 0) continue;
    const double p = static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]);
    r.precisions[n] = 100.0 * p;
    if (s.matches[n] == 0) zero = true;
    else log_sum += std::log(p);
    ++orders;
  }
  if (zero || orders == 0) return r;
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(orders));
  return r;
}

inline BleuResult corpus_bleu(const std::vector<text::Tokens>& hyps,
                              const std::vector<text::Tokens>& refs) {
  if (refs.empty()) throw InputError("BLEU needs at least one reference");
  if (hyps.size() != refs.size()) {
    throw InputError("BLEU: " + std::to_string(hyps.size()) + " hypotheses for " +
                     std::to_string(refs.size()) + " references");
  }
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += sentence_stats(hyps[i], refs[i]);
  return bleu_from_stats(total);
}

}  // namespace fnmt
