#include "mwnmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "mwnmt/errors.hpp"

namespace mwnmt {

namespace {

std::map<std::vector<std::string>, long> ngram_counts(const TokenSeq& tokens, std::size_t n) {
  std::map<std::vector<std::string>, long> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[TokenSeq(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

void BleuStats::add(const TokenSeq& hypothesis, const TokenSeq& reference) {
  hyp_len += static_cast<long>(hypothesis.size());
  ref_len += static_cast<long>(reference.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto ref = ngram_counts(reference, n);
    for (const auto& [gram, count] : ngram_counts(hypothesis, n)) {
      auto it = ref.find(gram);
      if (it != ref.end()) matches[n - 1] += std::min(count, it->second);
    }
    if (hypothesis.size() >= n) totals[n - 1] += static_cast<long>(hypothesis.size() - n + 1);
  }
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int i = 0; i < 4; ++i) {
    matches[i] += other.matches[i];
    totals[i] += other.totals[i];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

BleuReport bleu_from_stats(const BleuStats& s) {
  BleuReport r;
  r.hyp_len = s.hyp_len;
  r.ref_len = s.ref_len;
  r.ratio = s.ref_len > 0 ? static_cast<double>(s.hyp_len) / static_cast<double>(s.ref_len) : 0.0;
  if (s.hyp_len == 0) {
    r.brevity_penalty = 0.0;
  } else if (s.hyp_len < s.ref_len) {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  } else {
    r.brevity_penalty = 1.0;
  }
  bool any_zero = false;
  double log_sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    r.precisions[i] = s.totals[i] > 0 ? static_cast<double>(s.matches[i]) / static_cast<double>(s.totals[i]) : 0.0;
    if (r.precisions[i] == 0.0) {
      any_zero = true;
    } else {
      log_sum += std::log(r.precisions[i]);
    }
  }
  r.bleu = any_zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

BleuReport bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references) {
  if (hypotheses.size() != references.size()) {
    throw InputError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                     std::to_string(references.size()) + " references");
  }
  BleuStats stats;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) stats.add(hypotheses[i], references[i]);
  return bleu_from_stats(stats);
}

std::string BleuReport::to_string() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "BLEU = %.2f, %.1f/%.1f/%.1f/%.1f (BP=%.3f, ratio=%.3f, hyp_len=%ld, ref_len=%ld)",
                bleu, 100.0 * precisions[0], 100.0 * precisions[1], 100.0 * precisions[2], 100.0 * precisions[3],
                brevity_penalty, ratio, hyp_len, ref_len);
  return buf;
}

BleuReport BleuReport::parse(const std::string& line) {
  BleuReport r;
  double p[4];
  int consumed = 0;
  const int n = std::sscanf(line.c_str(), "BLEU = %lf, %lf/%lf/%lf/%lf (BP=%lf, ratio=%lf, hyp_len=%ld, ref_len=%ld)%n",
                            &r.bleu, &p[0], &p[1], &p[2], &p[3], &r.brevity_penalty, &r.ratio, &r.hyp_len,
                            &r.ref_len, &consumed);
  if (n != 9 || consumed != static_cast<int>(line.size())) throw InputError("not a BLEU report line: " + line);
  for (int i = 0; i < 4; ++i) r.precisions[i] = p[i] / 100.0;
  return r;
}

}  // namespace mwnmt
