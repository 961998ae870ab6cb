#pragma once

// Corpus-level BLEU in the style of multi-bleu: one reference per hypothesis,
// clipped n-gram counts up to 4-grams, no smoothing.

#include <array>
#include <string>
#include <vector>

namespace mwnmt {

using TokenSeq = std::vector<std::string>;

struct BleuStats {
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
  long hyp_len = 0;
  long ref_len = 0;

  void add(const TokenSeq& hypothesis, const TokenSeq& reference);
  BleuStats& operator+=(const BleuStats& other);
};

struct BleuReport {
  double bleu = 0.0;                 // 0..100
  std::array<double, 4> precisions{};  // fractions in [0, 1]
  double brevity_penalty = 0.0;
  double ratio = 0.0;  // hyp_len / ref_len
  long hyp_len = 0;
  long ref_len = 0;

  // "BLEU = 27.31, 60.1/33.0/20.2/12.8 (BP=1.000, ratio=1.012, hyp_len=..., ref_len=...)"
  std::string to_string() const;
  // Inverse of to_string at its printed precision; InputError on other text.
  static BleuReport parse(const std::string& line);
};

BleuReport bleu_from_stats(const BleuStats& stats);
// InputError when the counts differ.
BleuReport bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references);

}  // namespace mwnmt
