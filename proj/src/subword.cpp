#include "mwnmt/subword.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>

#include "mwnmt/errors.hpp"

namespace mwnmt {

namespace {

const std::array<std::string, Vocabulary::kNumReserved> kReservedNames = {"<pad>", "<s>", "</s>", "<unk>"};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::string pair_key(const std::string& a, const std::string& b) { return a + ' ' + b; }

bool ends_with_marker(const std::string& unit) {
  return unit.size() >= kEndOfWord.size() &&
         std::string_view(unit).substr(unit.size() - kEndOfWord.size()) == kEndOfWord;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  for (const std::string& chunk : split_whitespace(sentence)) {
    std::string word;
    for (char c : chunk) {
      if (static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c))) {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
        out.emplace_back(1, c);
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) out.push_back(std::move(word));
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = lead < 0xF0 ? 3 : 1;
    else if (lead >= 0xC0) len = 2;
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

// ---- learning --------------------------------------------------------------

MergeTable learn_bpe(const std::vector<std::string>& corpus, int num_merges, std::string language,
                     int min_pair_count) {
  std::map<std::string, long> word_freq;
  for (const std::string& line : corpus) {
    for (std::string& w : split_whitespace(line)) ++word_freq[std::move(w)];
  }
  if (word_freq.empty()) throw InputError("learn_bpe: corpus has no words");

  MergeTable table{std::move(language), {}};
  if (num_merges <= 0) return table;

  struct WordType {
    std::vector<std::string> symbols;
    long freq;
  };
  std::vector<WordType> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    auto symbols = utf8_chars(w);
    symbols.emplace_back(kEndOfWord);
    words.push_back({std::move(symbols), f});
  }

  for (int step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const WordType& wt : words) {
      for (std::size_t i = 0; i + 1 < wt.symbols.size(); ++i) counts[{wt.symbols[i], wt.symbols[i + 1]}] += wt.freq;
    }
    if (counts.empty()) break;
    // std::map iterates pairs in lexicographic order; strict > keeps the first.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    if (best->second < min_pair_count) break;
    const auto [left, right] = best->first;
    const std::string joined = left + right;
    for (WordType& wt : words) {
      std::vector<std::string> merged;
      merged.reserve(wt.symbols.size());
      for (std::size_t i = 0; i < wt.symbols.size(); ++i) {
        if (i + 1 < wt.symbols.size() && wt.symbols[i] == left && wt.symbols[i + 1] == right) {
          merged.push_back(joined);
          ++i;
        } else {
          merged.push_back(std::move(wt.symbols[i]));
        }
      }
      wt.symbols = std::move(merged);
    }
    table.merges.emplace_back(left, right);
  }
  return table;
}

void save_merges(const MergeTable& table, std::ostream& out) {
  for (const auto& [a, b] : table.merges) out << a << ' ' << b << '\n';
}

MergeTable load_merges(std::istream& in, std::string language) {
  MergeTable table{std::move(language), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto parts = split_whitespace(line);
    if (parts.size() != 2) throw InputError("merge file line " + std::to_string(lineno) + ": expected two symbols");
    table.merges.emplace_back(std::move(parts[0]), std::move(parts[1]));
  }
  return table;
}

// ---- application -----------------------------------------------------------

BpeSegmenter::BpeSegmenter(MergeTable table) : table_(std::move(table)) {
  for (std::size_t r = 0; r < table_.merges.size(); ++r) {
    // The first occurrence of a duplicated pair wins, as in in-order replay.
    rank_.emplace(pair_key(table_.merges[r].first, table_.merges[r].second), static_cast<int>(r));
  }
}

std::vector<std::string> BpeSegmenter::replay(std::vector<std::string> symbols) const {
  // Equivalent to replaying every merge in order: the next merge that can fire
  // is the lowest-ranked present pair ranked after the last one applied.
  int last = -1;
  while (symbols.size() > 1) {
    int best = -1;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != rank_.end() && it->second > last && (best < 0 || it->second < best)) best = it->second;
    }
    if (best < 0) break;
    const auto& [left, right] = table_.merges[best];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        merged.push_back(left + right);
        ++i;
      } else {
        merged.push_back(std::move(symbols[i]));
      }
    }
    symbols = std::move(merged);
    last = best;
  }
  return symbols;
}

std::vector<std::string> BpeSegmenter::segment_word(std::string_view word) const {
  auto symbols = utf8_chars(word);
  symbols.emplace_back(kEndOfWord);
  symbols = replay(std::move(symbols));
  if (symbols.size() > 1 && symbols.back() == kEndOfWord) {
    symbols.pop_back();
    symbols.back() += kEndOfWord;
  }
  return symbols;
}

std::vector<std::string> BpeSegmenter::segment(std::string_view sentence) const {
  std::vector<std::string> out;
  for (const std::string& w : split_whitespace(sentence)) {
    for (std::string& unit : segment_word(w)) out.push_back(std::move(unit));
  }
  return out;
}

std::vector<std::string> apply_bpe(std::string_view sentence, const MergeTable& table) {
  return BpeSegmenter(table).segment(sentence);
}

std::vector<std::string> merge_subwords(std::span<const std::string> units) {
  std::vector<std::string> words;
  std::string current;
  bool pending = false;
  for (const std::string& unit : units) {
    if (ends_with_marker(unit)) {
      current.append(unit, 0, unit.size() - kEndOfWord.size());
      words.push_back(std::move(current));
      current.clear();
      pending = false;
    } else {
      current += unit;
      pending = true;
    }
  }
  if (pending) words.push_back(std::move(current));
  return words;
}

std::string detokenize(std::span<const std::string> units) {
  std::string out;
  for (const std::string& w : merge_subwords(units)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// ---- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary(std::string language, std::vector<std::string> symbols)
    : language_(std::move(language)), symbols_(std::move(symbols)) {
  index_.reserve(symbols_.size());
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw InputError("vocabulary: empty symbol at id " + std::to_string(i + kNumReserved));
    if (!index_.emplace(symbols_[i], static_cast<int>(i) + kNumReserved).second) {
      throw InputError("vocabulary: duplicate symbol '" + symbols_[i] + "'");
    }
  }
}

int Vocabulary::id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("vocabulary " + language_ + ": id " + std::to_string(id) + " outside [0," + std::to_string(size()) + ")");
  }
  return id < kNumReserved ? kReservedNames[id] : symbols_[id - kNumReserved];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const std::string& t : tokens) ids.push_back(id(t));
  ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int i : ids) {
    const std::string& s = symbol(i);
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    out.push_back(s);
  }
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  for (const std::string& s : symbols_) out << s << '\n';
}

Vocabulary Vocabulary::load(std::istream& in, std::string language) {
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    symbols.push_back(std::move(line));
  }
  return Vocabulary(std::move(language), std::move(symbols));
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& segmented, int max_size, std::string language) {
  if (max_size < Vocabulary::kNumReserved) {
    throw ConfigError("build_vocab: max_size " + std::to_string(max_size) + " cannot hold the reserved ids");
  }
  std::map<std::string, long> counts;
  for (const auto& sentence : segmented) {
    for (const std::string& s : sentence) ++counts[s];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(max_size - Vocabulary::kNumReserved));
  std::vector<std::string> symbols;
  symbols.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) symbols.push_back(ranked[i].first);
  return Vocabulary(std::move(language), std::move(symbols));
}

}  // namespace mwnmt
