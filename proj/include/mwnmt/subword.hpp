#pragma once

// Byte-pair-encoding segmentation and per-language vocabularies.

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mwnmt {

// Terminal symbol closing every word during learning and application.
inline constexpr std::string_view kEndOfWord = "\xE2\x9F\xA8/w\xE2\x9F\xA9";  // "⟨/w⟩"

// Splits on whitespace, then separates ASCII punctuation into its own tokens.
// Case is preserved.
std::vector<std::string> tokenize(std::string_view sentence);

// UTF-8 code points of a word; malformed bytes pass through one at a time.
std::vector<std::string> utf8_chars(std::string_view word);

struct MergeTable {
  std::string language;
  // Learning order; application replays them in exactly this order.
  std::vector<std::pair<std::string, std::string>> merges;

  bool operator==(const MergeTable&) const = default;
};

// Greedy BPE: repeatedly merges the most frequent adjacent symbol pair over
// word types weighted by frequency. Ties go to the lexicographically smallest
// pair. Stops after num_merges merges or when the best pair occurs fewer than
// min_pair_count times.
MergeTable learn_bpe(const std::vector<std::string>& corpus, int num_merges, std::string language = {},
                     int min_pair_count = 2);

void save_merges(const MergeTable& table, std::ostream& out);
MergeTable load_merges(std::istream& in, std::string language = {});

// Applies a merge table. Instances are immutable and safe to share.
class BpeSegmenter {
 public:
  explicit BpeSegmenter(MergeTable table);

  const MergeTable& table() const { return table_; }

  // Replays the merges over an explicit symbol sequence of one word.
  std::vector<std::string> replay(std::vector<std::string> symbols) const;
  // One word: characters plus end-of-word marker, merges replayed. The marker
  // is attached to the word's final unit in the output.
  std::vector<std::string> segment_word(std::string_view word) const;
  // Whitespace-separated words of a sentence.
  std::vector<std::string> segment(std::string_view sentence) const;

 private:
  MergeTable table_;
  std::unordered_map<std::string, int> rank_;
};

std::vector<std::string> apply_bpe(std::string_view sentence, const MergeTable& table);

// Undoes segmentation: units up to and including one carrying the marker form
// a word. A trailing unmarked run is flushed as a final word.
std::vector<std::string> merge_subwords(std::span<const std::string> units);
std::string detokenize(std::span<const std::string> units);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary() = default;
  // `symbols` excludes the reserved entries; symbol i receives id i + 4.
  Vocabulary(std::string language, std::vector<std::string> symbols);

  const std::string& language() const { return language_; }
  int size() const { return static_cast<int>(symbols_.size()) + kNumReserved; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  // UNK for unknown symbols.
  int id(std::string_view symbol) const;
  const std::string& symbol(int id) const;

  // Appends EOS.
  std::vector<int> encode(std::span<const std::string> tokens) const;
  // Stops at the first EOS, drops PAD and BOS.
  std::vector<std::string> decode(std::span<const int> ids) const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in, std::string language = {});

  bool operator==(const Vocabulary& other) const {
    return language_ == other.language_ && symbols_ == other.symbols_;
  }

 private:
  std::string language_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

// Keeps the max_size - 4 most frequent symbols (ties lexicographic); max_size
// counts the reserved ids.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& segmented, int max_size,
                       std::string language = {});

}  // namespace mwnmt
