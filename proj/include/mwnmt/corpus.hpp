#pragma once

// Parallel corpora, length filtering, nested subsampling and minibatching.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mwnmt/subword.hpp"

namespace mwnmt {

struct Example {
  std::vector<int> source;  // ends with EOS
  std::vector<int> target;  // ends with EOS

  bool operator==(const Example&) const = default;
};

struct PairCorpus {
  std::string source_lang;
  std::string target_lang;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::string pair_name() const { return source_lang + "-" + target_lang; }
};

// Rows of one language pair padded with PAD to the longest row per side.
struct Batch {
  std::string source_lang;
  std::string target_lang;
  int rows = 0;
  int source_len = 0;  // padded width
  int target_len = 0;
  std::vector<int> source;  // rows x source_len, row-major
  std::vector<int> target;  // rows x target_len
  std::vector<int> source_lengths;
  std::vector<int> target_lengths;

  int source_at(int row, int t) const { return source[static_cast<std::size_t>(row) * source_len + t]; }
  int target_at(int row, int t) const { return target[static_cast<std::size_t>(row) * target_len + t]; }
  std::vector<int> source_column(int t) const;
  std::vector<int> target_column(int t) const;
  // 1.0 where t < target_lengths[row].
  std::vector<double> target_mask(int t) const;
  long target_symbols() const;
};

Batch make_batch(const std::string& source_lang, const std::string& target_lang, std::span<const Example> examples);
Batch make_batch(const PairCorpus& corpus);

// Tokenize, segment with BPE and map to ids (EOS appended) for one language.
// Without a merge table every token is its own unit.
class TextPipeline {
 public:
  TextPipeline(MergeTable merges, Vocabulary vocab);
  explicit TextPipeline(Vocabulary vocab);

  std::vector<std::string> units(const std::string& line) const;
  std::vector<int> encode(const std::string& line) const;
  // Word tokens after undoing segmentation; what BLEU is computed on.
  std::vector<std::string> words(std::span<const int> ids) const;
  std::string render(std::span<const int> ids) const;

  const Vocabulary& vocab() const { return vocab_; }
  const MergeTable* merges() const { return segmenter_ ? &segmenter_->table() : nullptr; }

 private:
  std::optional<BpeSegmenter> segmenter_;
  Vocabulary vocab_;
};

std::vector<std::string> read_lines(const std::string& path);

struct LoadReport {
  PairCorpus corpus;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

// Line i of both files forms example i. Pairs whose either side exceeds
// max_len symbols (EOS included) are dropped and counted.
LoadReport load_parallel(const std::string& source_file, const std::string& target_file,
                         const std::string& source_lang, const std::string& target_lang,
                         const TextPipeline& source, const TextPipeline& target, int max_len);

// Same filter applied to already-encoded examples.
std::size_t filter_by_length(PairCorpus& corpus, int max_len);

// Seeded sample without replacement of round(fraction * n) examples, original
// order preserved. Samples for the same seed are nested across fractions.
PairCorpus subsample(const PairCorpus& corpus, double fraction, std::uint64_t seed);

// Shuffles at every epoch boundary and yields batches forever; the last
// batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(const PairCorpus& corpus, int batch_size, std::uint64_t seed);

  Batch next();
  int epoch() const { return epoch_; }

 private:
  void reshuffle();

  const PairCorpus* corpus_;
  int batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
};

// One shuffled epoch.
std::vector<Batch> batches(const PairCorpus& corpus, int batch_size, std::uint64_t seed);

}  // namespace mwnmt
