#pragma once

// Synthetic language families for desk-scale experiments.
//
// A latent sentence generator draws token sequences over a shared latent
// vocabulary. Each language realizes a latent sentence through a chain of
// invertible transforms:
//   identity  no change
//   cipher    per-language token substitution (seeded permutation)
//   reverse   sequence reversal
//   swap      swaps adjacent positions (0,1), (2,3), ...
// Surface tokens are the words "w0" .. "w<V-1>", so two identity languages
// produce identical text.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mwnmt/corpus.hpp"
#include "mwnmt/subword.hpp"

namespace mwnmt {

struct SyntheticLanguage {
  std::string name;
  std::vector<std::string> transforms;  // applied left to right
};

struct SyntheticPairRequest {
  std::string source;
  std::string target;
  int count = 0;
};

struct SyntheticSpec {
  std::vector<SyntheticLanguage> languages;
  int vocab_size = 20;
  int min_len = 3;
  int max_len = 7;
  std::vector<SyntheticPairRequest> pairs;
  std::uint64_t seed = 1;
};

// Keys: languages, transforms.<name>, vocab_size, min_len, max_len,
// pair (repeatable "SRC TGT COUNT"), seed.
SyntheticSpec parse_synthetic_spec(std::istream& in, const std::string& origin = "<synthetic>");

class SyntheticFamily {
 public:
  explicit SyntheticFamily(SyntheticSpec spec);

  const SyntheticSpec& spec() const { return spec_; }
  bool has_language(const std::string& name) const { return ciphers_.count(name) > 0; }
  // Word-level vocabulary shared by every language ("w0" ...).
  const Vocabulary& vocabulary(const std::string& language) const;

  // Latent sentence as token indices in [0, vocab_size).
  std::vector<int> sample_latent(std::mt19937_64& rng) const;
  // Draws `count` latent sentences not already in `used`, adding them to it.
  std::vector<std::vector<int>> sample_unique(int count, std::mt19937_64& rng, std::set<std::vector<int>>& used) const;

  std::vector<int> realize(const std::string& language, std::span<const int> latent) const;
  std::vector<int> invert(const std::string& language, std::span<const int> surface) const;

  // Surface tokens -> vocabulary ids with EOS appended, and back.
  std::vector<int> to_ids(const std::string& language, std::span<const int> surface) const;
  std::vector<int> from_ids(std::span<const int> ids) const;

  PairCorpus make_corpus(const std::string& source, const std::string& target,
                         const std::vector<std::vector<int>>& latents) const;

 private:
  const std::vector<std::string>& transforms_of(const std::string& language) const;

  SyntheticSpec spec_;
  std::map<std::string, std::vector<int>> ciphers_;
  std::map<std::string, std::vector<int>> inverse_ciphers_;
  std::map<std::string, Vocabulary> vocabularies_;
};

// Corpora for every requested pair, each from its own fresh latent sentences.
std::vector<PairCorpus> synth_family(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace mwnmt
