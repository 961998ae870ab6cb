#include "mwnmt/synthetic.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <sstream>

#include "mwnmt/errors.hpp"
#include "mwnmt/kvconfig.hpp"

namespace mwnmt {

namespace {

const std::set<std::string> kKnownTransforms = {"identity", "cipher", "reverse", "swap"};

std::vector<std::string> words_of(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

void swap_adjacent(std::vector<int>& seq) {
  for (std::size_t i = 0; i + 1 < seq.size(); i += 2) std::swap(seq[i], seq[i + 1]);
}

}  // namespace

SyntheticSpec parse_synthetic_spec(std::istream& in, const std::string& origin) {
  const KeyValueConfig cfg = KeyValueConfig::parse(in, origin);
  SyntheticSpec spec;
  const auto langs = cfg.get("languages");
  if (!langs) throw ConfigError(origin + ": missing 'languages'");
  for (const std::string& name : words_of(*langs)) {
    SyntheticLanguage lang{name, words_of(cfg.get_string("transforms." + name, "identity"))};
    spec.languages.push_back(std::move(lang));
  }
  spec.vocab_size = cfg.get_int("vocab_size", spec.vocab_size);
  spec.min_len = cfg.get_int("min_len", spec.min_len);
  spec.max_len = cfg.get_int("max_len", spec.max_len);
  spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<int>(spec.seed)));
  for (const std::string& p : cfg.get_all("pair")) {
    auto parts = words_of(p);
    if (parts.size() != 3) throw ConfigError(origin + ": pair must be 'SRC TGT COUNT', got '" + p + "'");
    spec.pairs.push_back({parts[0], parts[1], parse_int(parts[2], origin + ": pair count")});
  }
  return spec;
}

SyntheticFamily::SyntheticFamily(SyntheticSpec spec) : spec_(std::move(spec)) {
  if (spec_.languages.size() < 2) throw ConfigError("synthetic family needs at least two languages");
  if (spec_.vocab_size < 1) throw ConfigError("synthetic vocab_size must be positive");
  if (spec_.min_len < 1 || spec_.max_len < spec_.min_len) {
    throw ConfigError("synthetic lengths must satisfy 1 <= min_len <= max_len");
  }
  std::vector<std::string> words;
  for (int k = 0; k < spec_.vocab_size; ++k) words.push_back("w" + std::to_string(k));
  for (std::size_t li = 0; li < spec_.languages.size(); ++li) {
    const SyntheticLanguage& lang = spec_.languages[li];
    if (ciphers_.count(lang.name)) throw ConfigError("duplicate synthetic language " + lang.name);
    for (const std::string& t : lang.transforms) {
      if (!kKnownTransforms.count(t)) {
        throw ConfigError("unknown transform '" + t + "' for language " + lang.name +
                          " (known: identity, cipher, reverse, swap)");
      }
    }
    std::vector<int> perm(spec_.vocab_size);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(spec_.seed * 7919 + li + 1);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> inverse(spec_.vocab_size);
    for (int k = 0; k < spec_.vocab_size; ++k) inverse[perm[k]] = k;
    ciphers_[lang.name] = std::move(perm);
    inverse_ciphers_[lang.name] = std::move(inverse);
    vocabularies_.emplace(lang.name, Vocabulary(lang.name, words));
  }
  for (const auto& p : spec_.pairs) {
    if (!has_language(p.source) || !has_language(p.target)) {
      throw ConfigError("synthetic pair " + p.source + "-" + p.target + " names an undeclared language");
    }
    if (p.count < 0) throw ConfigError("synthetic pair count must be non-negative");
  }
}

const Vocabulary& SyntheticFamily::vocabulary(const std::string& language) const {
  auto it = vocabularies_.find(language);
  if (it == vocabularies_.end()) throw ConfigError("unknown synthetic language " + language);
  return it->second;
}

const std::vector<std::string>& SyntheticFamily::transforms_of(const std::string& language) const {
  for (const auto& l : spec_.languages) {
    if (l.name == language) return l.transforms;
  }
  throw ConfigError("unknown synthetic language " + language);
}

std::vector<int> SyntheticFamily::sample_latent(std::mt19937_64& rng) const {
  std::uniform_int_distribution<int> len_dist(spec_.min_len, spec_.max_len);
  std::uniform_int_distribution<int> tok_dist(0, spec_.vocab_size - 1);
  std::vector<int> latent(len_dist(rng));
  for (int& t : latent) t = tok_dist(rng);
  return latent;
}

std::vector<std::vector<int>> SyntheticFamily::sample_unique(int count, std::mt19937_64& rng,
                                                             std::set<std::vector<int>>& used) const {
  std::vector<std::vector<int>> out;
  out.reserve(count);
  long attempts = 0;
  const long limit = 1000L * std::max(count, 1) + 100000L;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > limit) throw ConfigError("synthetic generator cannot produce enough distinct sentences");
    auto latent = sample_latent(rng);
    if (used.insert(latent).second) out.push_back(std::move(latent));
  }
  return out;
}

std::vector<int> SyntheticFamily::realize(const std::string& language, std::span<const int> latent) const {
  std::vector<int> seq(latent.begin(), latent.end());
  const auto& cipher = ciphers_.at(language);
  for (const std::string& t : transforms_of(language)) {
    if (t == "cipher") {
      for (int& tok : seq) tok = cipher.at(tok);
    } else if (t == "reverse") {
      std::reverse(seq.begin(), seq.end());
    } else if (t == "swap") {
      swap_adjacent(seq);
    }
  }
  return seq;
}

std::vector<int> SyntheticFamily::invert(const std::string& language, std::span<const int> surface) const {
  std::vector<int> seq(surface.begin(), surface.end());
  const auto& inverse = inverse_ciphers_.at(language);
  const auto& transforms = transforms_of(language);
  for (auto it = transforms.rbegin(); it != transforms.rend(); ++it) {
    if (*it == "cipher") {
      for (int& tok : seq) tok = inverse.at(tok);
    } else if (*it == "reverse") {
      std::reverse(seq.begin(), seq.end());
    } else if (*it == "swap") {
      swap_adjacent(seq);
    }
  }
  return seq;
}

std::vector<int> SyntheticFamily::to_ids(const std::string& language, std::span<const int> surface) const {
  (void)vocabulary(language);
  std::vector<int> ids;
  ids.reserve(surface.size() + 1);
  for (int tok : surface) ids.push_back(tok + Vocabulary::kNumReserved);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<int> SyntheticFamily::from_ids(std::span<const int> ids) const {
  std::vector<int> surface;
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id < Vocabulary::kNumReserved) continue;
    surface.push_back(id - Vocabulary::kNumReserved);
  }
  return surface;
}

PairCorpus SyntheticFamily::make_corpus(const std::string& source, const std::string& target,
                                        const std::vector<std::vector<int>>& latents) const {
  PairCorpus corpus{source, target, {}};
  corpus.examples.reserve(latents.size());
  for (const auto& latent : latents) {
    corpus.examples.push_back({to_ids(source, realize(source, latent)), to_ids(target, realize(target, latent))});
  }
  return corpus;
}

std::vector<PairCorpus> synth_family(const SyntheticSpec& spec, std::uint64_t seed) {
  SyntheticFamily family(spec);
  std::mt19937_64 rng(seed);
  std::vector<PairCorpus> out;
  for (const auto& p : spec.pairs) {
    std::vector<std::vector<int>> latents;
    latents.reserve(p.count);
    for (int i = 0; i < p.count; ++i) latents.push_back(family.sample_latent(rng));
    out.push_back(family.make_corpus(p.source, p.target, latents));
  }
  return out;
}

}  // namespace mwnmt
