#include "mwnmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mwnmt/errors.hpp"

namespace mwnmt {

std::vector<int> Batch::source_column(int t) const {
  std::vector<int> col(rows);
  for (int r = 0; r < rows; ++r) col[r] = source_at(r, t);
  return col;
}

std::vector<int> Batch::target_column(int t) const {
  std::vector<int> col(rows);
  for (int r = 0; r < rows; ++r) col[r] = target_at(r, t);
  return col;
}

std::vector<double> Batch::target_mask(int t) const {
  std::vector<double> mask(rows);
  for (int r = 0; r < rows; ++r) mask[r] = t < target_lengths[r] ? 1.0 : 0.0;
  return mask;
}

long Batch::target_symbols() const { return std::accumulate(target_lengths.begin(), target_lengths.end(), 0L); }

Batch make_batch(const std::string& source_lang, const std::string& target_lang, std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("make_batch: no examples");
  Batch b;
  b.source_lang = source_lang;
  b.target_lang = target_lang;
  b.rows = static_cast<int>(examples.size());
  for (const Example& ex : examples) {
    if (ex.source.empty() || ex.target.empty()) throw InputError("make_batch: empty sequence in " + source_lang + "-" + target_lang);
    b.source_len = std::max(b.source_len, static_cast<int>(ex.source.size()));
    b.target_len = std::max(b.target_len, static_cast<int>(ex.target.size()));
  }
  b.source.assign(static_cast<std::size_t>(b.rows) * b.source_len, Vocabulary::kPad);
  b.target.assign(static_cast<std::size_t>(b.rows) * b.target_len, Vocabulary::kPad);
  for (int r = 0; r < b.rows; ++r) {
    const Example& ex = examples[r];
    std::copy(ex.source.begin(), ex.source.end(), b.source.begin() + static_cast<std::ptrdiff_t>(r) * b.source_len);
    std::copy(ex.target.begin(), ex.target.end(), b.target.begin() + static_cast<std::ptrdiff_t>(r) * b.target_len);
    b.source_lengths.push_back(static_cast<int>(ex.source.size()));
    b.target_lengths.push_back(static_cast<int>(ex.target.size()));
  }
  return b;
}

Batch make_batch(const PairCorpus& corpus) { return make_batch(corpus.source_lang, corpus.target_lang, corpus.examples); }

// ---- text ------------------------------------------------------------------

TextPipeline::TextPipeline(MergeTable merges, Vocabulary vocab)
    : segmenter_(std::in_place, std::move(merges)), vocab_(std::move(vocab)) {}

TextPipeline::TextPipeline(Vocabulary vocab) : vocab_(std::move(vocab)) {}

std::vector<std::string> TextPipeline::units(const std::string& line) const {
  std::vector<std::string> out;
  for (std::string& tok : tokenize(line)) {
    if (!segmenter_) {
      out.push_back(std::move(tok));
      continue;
    }
    for (std::string& u : segmenter_->segment_word(tok)) out.push_back(std::move(u));
  }
  return out;
}

std::vector<int> TextPipeline::encode(const std::string& line) const { return vocab_.encode(units(line)); }

std::vector<std::string> TextPipeline::words(std::span<const int> ids) const {
  auto units = vocab_.decode(ids);
  return segmenter_ ? merge_subwords(units) : units;
}

std::string TextPipeline::render(std::span<const int> ids) const {
  std::string out;
  for (const std::string& w : words(ids)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

LoadReport load_parallel(const std::string& source_file, const std::string& target_file,
                         const std::string& source_lang, const std::string& target_lang,
                         const TextPipeline& source, const TextPipeline& target, int max_len) {
  const auto src_lines = read_lines(source_file);
  const auto tgt_lines = read_lines(target_file);
  if (src_lines.size() != tgt_lines.size()) {
    throw InputError("line count mismatch: " + source_file + " has " + std::to_string(src_lines.size()) + " lines, " +
                     target_file + " has " + std::to_string(tgt_lines.size()));
  }
  LoadReport report;
  report.corpus.source_lang = source_lang;
  report.corpus.target_lang = target_lang;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    Example ex{source.encode(src_lines[i]), target.encode(tgt_lines[i])};
    if (static_cast<int>(ex.source.size()) > max_len || static_cast<int>(ex.target.size()) > max_len ||
        ex.source.size() < 2 || ex.target.size() < 2) {
      ++report.dropped;
      continue;
    }
    report.corpus.examples.push_back(std::move(ex));
  }
  if (src_lines.empty()) report.warnings.push_back("empty corpus: " + source_file + " / " + target_file);
  if (report.dropped > 0) {
    report.warnings.push_back("dropped " + std::to_string(report.dropped) + " pairs longer than " +
                              std::to_string(max_len) + " symbols or empty");
  }
  return report;
}

std::size_t filter_by_length(PairCorpus& corpus, int max_len) {
  const std::size_t before = corpus.examples.size();
  std::erase_if(corpus.examples, [max_len](const Example& ex) {
    return static_cast<int>(ex.source.size()) > max_len || static_cast<int>(ex.target.size()) > max_len;
  });
  return before - corpus.examples.size();
}

PairCorpus subsample(const PairCorpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DomainError("subsample: fraction " + std::to_string(fraction) + " outside (0,1]");
  }
  const std::size_t n = corpus.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  perm.resize(std::min(keep, n));
  std::sort(perm.begin(), perm.end());
  PairCorpus out{corpus.source_lang, corpus.target_lang, {}};
  out.examples.reserve(perm.size());
  for (std::size_t i : perm) out.examples.push_back(corpus.examples[i]);
  return out;
}

BatchIterator::BatchIterator(const PairCorpus& corpus, int batch_size, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), rng_(seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  order_.resize(corpus.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

Batch BatchIterator::next() {
  if (order_.empty()) throw InputError("cannot draw batches from empty corpus " + corpus_->pair_name());
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  std::vector<Example> rows;
  rows.reserve(end - cursor_);
  for (std::size_t i = cursor_; i < end; ++i) rows.push_back(corpus_->examples[order_[i]]);
  cursor_ = end;
  return make_batch(corpus_->source_lang, corpus_->target_lang, rows);
}

std::vector<Batch> batches(const PairCorpus& corpus, int batch_size, std::uint64_t seed) {
  std::vector<Batch> out;
  if (corpus.empty()) return out;
  BatchIterator it(corpus, batch_size, seed);
  const std::size_t count = (corpus.size() + batch_size - 1) / static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < count; ++i) out.push_back(it.next());
  return out;
}

}  // namespace mwnmt
