#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "mwnmt/bleu.hpp"
#include "mwnmt/decoding.hpp"
#include "mwnmt/errors.hpp"
#include "mwnmt/trainer.hpp"
#include "test_util.hpp"

using namespace mwnmt;
using namespace mwnmt::testing;

namespace {

// Symbols a=0, b=1, EOS=2. The state row holds the prefix (padded with -1),
// and the next-symbol distribution is looked up by prefix.
class TableModel : public StepModel {
 public:
  using Table = std::map<std::vector<int>, std::array<double, 3>>;
  explicit TableModel(Table table) : table_(std::move(table)) {}

  int vocab_size() const override { return 3; }
  int bos() const override { return -1; }
  int eos() const override { return 2; }
  Tensor initial_state() const override { return Tensor::filled({1, kWidth}, -1.0); }

  StepResult step(const Tensor& states, std::span<const int> prev) const override {
    const int k = states.dim(0);
    StepResult r;
    std::vector<double> next(states.data().begin(), states.data().end());
    for (int i = 0; i < k; ++i) {
      std::vector<int> prefix;
      for (int j = 0; j < kWidth && next[i * kWidth + j] >= 0; ++j) prefix.push_back(static_cast<int>(next[i * kWidth + j]));
      if (prev[i] >= 0) {
        next[i * kWidth + static_cast<int>(prefix.size())] = prev[i];
        prefix.push_back(prev[i]);
      }
      const auto it = table_.find(prefix);
      const std::array<double, 3> p = it != table_.end() ? it->second : std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3};
      for (double x : p) r.logprobs.push_back(std::log(x));
    }
    r.states = Tensor::from_data({k, kWidth}, next);
    return r;
  }

  double prob(const std::vector<int>& seq) const {
    double p = 1;
    std::vector<int> prefix;
    for (int y : seq) {
      const auto it = table_.find(prefix);
      p *= it != table_.end() ? it->second[y] : 1.0 / 3;
      prefix.push_back(y);
    }
    return p;
  }

 private:
  static constexpr int kWidth = 8;
  Table table_;
};

TableModel::Table greedy_trap() {
  return {
      {{}, {0.5, 0.4, 0.1}},
      {{0}, {0.3, 0.3, 0.4}},
      {{1}, {0.05, 0.05, 0.9}},
      {{0, 0}, {0.1, 0.1, 0.8}},
      {{0, 1}, {0.25, 0.25, 0.5}},
      {{1, 0}, {0.2, 0.2, 0.6}},
      {{1, 1}, {0.6, 0.2, 0.2}},
  };
}

// Best finished sequence of length <= max_len by logprob / length.
std::vector<int> exhaustive_best(const TableModel& m, int max_len) {
  std::vector<int> best;
  double best_score = -INFINITY;
  std::function<void(std::vector<int>)> walk = [&](std::vector<int> prefix) {
    for (int y = 0; y < 3; ++y) {
      auto seq = prefix;
      seq.push_back(y);
      if (y == 2) {
        const double score = std::log(m.prob(seq)) / static_cast<double>(seq.size());
        if (score > best_score) {
          best_score = score;
          best = seq;
        }
      } else if (static_cast<int>(seq.size()) < max_len) {
        walk(seq);
      }
    }
  };
  walk({});
  return best;
}

std::vector<LanguageSpec> langs(std::initializer_list<const char*> names, int vocab) {
  std::vector<LanguageSpec> out;
  for (const char* n : names) out.push_back({n, vocab, 0});
  return out;
}

ModelDims tiny() { return {4, 5, 6, 7, 7, 5, 0}; }

std::vector<int> random_source(std::mt19937_64& rng, int vocab) {
  std::vector<int> s(1 + rng() % 6);
  for (auto& x : s) x = 4 + static_cast<int>(rng() % (vocab - 4));
  s.push_back(Vocabulary::kEos);
  return s;
}

double rescore(const MultiWayModel& m, const std::vector<int>& src, const std::vector<int>& tokens) {
  auto ctx = encode(m.encoder("a"), m.shared_init(), src);
  const auto& dec = m.decoder("b");
  return teacher_forced_logprob(dec, m.adaptor(), AttentionView::build(m.attention(), ctx),
                                init_state(dec, ctx.init_vector), TokenMatrix::single(tokens))
      .item();
}

TokenSeq words(const std::string& s) {
  TokenSeq out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("greedy falls into the trap, beam 2 matches exhaustive enumeration") {
  TableModel m(greedy_trap());
  auto g = greedy_search(m, 3);
  CHECK(g.tokens == std::vector<int>{0, 2});
  CHECK(g.finished);

  BeamStats stats;
  auto b = beam_search(m, 2, 3, &stats);
  CHECK(b.tokens == exhaustive_best(m, 3));
  CHECK(b.tokens == std::vector<int>{1, 2});
  CHECK(b.finished);
  CHECK(std::abs(b.logprob - (std::log(0.4) + std::log(0.9))) < 1e-15);
  for (long c : stats.candidates_per_step) CHECK(c <= 2 * 3);

  auto one = beam_search(m, 1, 3);
  CHECK(one.tokens == g.tokens);
  CHECK(one.logprob == g.logprob);
}

TEST_CASE("beam pool and max_steps edge cases") {
  TableModel m(greedy_trap());
  auto cut = greedy_search(m, 1);
  CHECK(cut.tokens == std::vector<int>{0});
  CHECK_FALSE(cut.finished);

  TableModel eos_first({{{}, {0.1, 0.1, 0.8}}});
  auto e = greedy_search(eos_first, 1);
  CHECK(e.tokens == std::vector<int>{2});
  CHECK(e.finished);

  // Nothing finishes within the limit: the live beam is returned.
  TableModel never({{{}, {0.9, 0.1, 0.0}}, {{0}, {0.9, 0.1, 0.0}}});
  auto live = beam_search(never, 2, 2);
  CHECK_FALSE(live.finished);
  CHECK(live.tokens == std::vector<int>{0, 0});

  CHECK_THROWS_AS(greedy_search(m, 0), ConfigError);
  CHECK_THROWS_AS(beam_search(m, 0, 3), ConfigError);
  CHECK_THROWS_AS(beam_search(m, 2, 0), ConfigError);
}

TEST_CASE("ties go to the lowest id") {
  TableModel tie({{{}, {0.4, 0.4, 0.2}}, {{0}, {0.0, 0.0, 1.0}}});
  CHECK(greedy_search(tie, 3).tokens == std::vector<int>{0, 2});
  CHECK(beam_search(tie, 1, 3).tokens == std::vector<int>{0, 2});
}

TEST_CASE("beam 1 equals greedy on random models and sources") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    MultiWayModel m(tiny(), langs({"a"}, 9), langs({"b"}, 9), 100 + trial);
    const auto src = random_source(rng, 9);
    const auto g = greedy_decode(m, src, "a", "b");
    const auto b = beam_decode(m, src, "a", "b", 1);
    CHECK(g.tokens == b.tokens);
    CHECK(g.logprob == b.logprob);
    CHECK(g.finished == b.finished);
    CHECK(g.tokens.size() <= static_cast<std::size_t>(default_max_steps(src.size())));
  }
}

TEST_CASE("hypothesis logprob equals teacher-forced rescoring") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    MultiWayModel m(tiny(), langs({"a"}, 9), langs({"b"}, 9), 200 + trial);
    const auto src = random_source(rng, 9);
    for (int width : {1, 3}) {
      const auto h = beam_decode(m, src, "a", "b", width);
      CHECK(std::abs(h.logprob - rescore(m, src, h.tokens)) < 1e-10);
      CHECK(h.logprob <= 0);
    }
  }
}

TEST_CASE("greedy decoding is deterministic and respects max_steps") {
  MultiWayModel m(tiny(), langs({"a"}, 9), langs({"b"}, 9), 5);
  const std::vector<int> src = {4, 5, 2};
  CHECK(greedy_decode(m, src, "a", "b").tokens == greedy_decode(m, src, "a", "b").tokens);
  const auto one = greedy_decode(m, src, "a", "b", 1);
  CHECK(one.tokens.size() == 1);
  CHECK(one.finished == (one.tokens[0] == Vocabulary::kEos));
  CHECK_THROWS_AS(greedy_decode(m, src, "a", "zz"), ConfigError);
}

TEST_CASE("a model trained on one example decodes it exactly") {
  // The narrowest dims sit on the unigram plateau for hundreds of updates.
  MultiWayModel m({8, 12, 12, 16, 16, 12, 0}, langs({"a"}, 9), langs({"b"}, 9), 6);
  PairCorpus c{"a", "b", {{{4, 5, 6, 2}, {7, 8, 4, 2}}}};
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.lr = 0.01;
  cfg.max_updates = 150;
  TrainLog log;
  train(m, {c}, {}, cfg, log);
  CHECK(greedy_decode(m, c.examples[0].source, "a", "b").tokens == c.examples[0].target);
}

TEST_CASE("parallel corpus decoding matches sequential") {
  MultiWayModel m(tiny(), langs({"a"}, 9), langs({"b"}, 9), 7);
  std::mt19937_64 rng(7);
  PairCorpus c{"a", "b", {}};
  for (int i = 0; i < 9; ++i) c.examples.push_back({random_source(rng, 9), {4, 2}});
  const auto seq = decode_corpus(m, c, 2, 1);
  const auto par = decode_corpus(m, c, 2, 3);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(seq[i].tokens == par[i].tokens);
}

TEST_CASE("avg_logprob examples") {
  MultiWayModel m(tiny(), langs({"a"}, 10), langs({"b"}, 10), 8);
  std::mt19937_64 rng(8);
  PairCorpus c{"a", "b", {}};
  for (int i = 0; i < 7; ++i) {
    std::vector<int> tgt(4);
    for (auto& x : tgt) x = 4 + static_cast<int>(rng() % 6);
    tgt.push_back(Vocabulary::kEos);
    c.examples.push_back({random_source(rng, 10), tgt});
  }
  const double avg = avg_logprob(m, c, 3);
  CHECK(avg <= 0);
  CHECK(avg < 0.8 * 5 * std::log(0.1));
  CHECK(avg > 1.2 * 5 * std::log(0.1));

  double manual = 0;
  for (const auto& ex : c.examples) manual += rescore(m, ex.source, ex.target);
  CHECK(std::abs(avg - manual / 7) < 1e-12);

  CHECK_THROWS_AS(avg_logprob(m, PairCorpus{"a", "b", {}}), DomainError);
}

TEST_CASE("bleu examples") {
  const auto perfect = bleu({words("the cat sat on the mat")}, {words("the cat sat on the mat")});
  CHECK(perfect.bleu == 100.0);
  CHECK(perfect.to_string() == "BLEU = 100.00, 100.0/100.0/100.0/100.0 (BP=1.000, ratio=1.000, hyp_len=6, ref_len=6)");

  const auto short_hyp = bleu({words("the cat sat")}, {words("the cat sat down")});
  CHECK(short_hyp.bleu == 0.0);
  CHECK(short_hyp.precisions[3] == 0.0);

  const auto clipped = bleu({words("a a a a")}, {words("a a")});
  CHECK(clipped.precisions[0] == 0.5);

  // All precisions 1, c = 5 < r = 7.
  const auto bp = bleu({words("a b c d e")}, {words("a b c d e f g")});
  CHECK(std::abs(bp.brevity_penalty - std::exp(1.0 - 7.0 / 5.0)) < 1e-15);
  CHECK(std::abs(bp.bleu - 100.0 * std::exp(1.0 - 7.0 / 5.0)) < 1e-12);

  const auto empty = bleu({TokenSeq{}}, {words("a b c d")});
  CHECK(empty.bleu == 0.0);

  CHECK_THROWS_AS(bleu({words("a")}, {}), InputError);
}

TEST_CASE("bleu hand-computed corpus case") {
  // Repeated a and b are clipped to their single reference occurrence.
  const auto r = bleu({words("a b c d a b")}, {words("a b c d e")});
  CHECK(r.precisions[0] == 4.0 / 6);
  CHECK(r.precisions[1] == 3.0 / 5);
  CHECK(r.precisions[2] == 2.0 / 4);
  CHECK(r.precisions[3] == 1.0 / 3);
  CHECK(r.brevity_penalty == 1.0);
  const double expected = 100.0 * std::exp((std::log(4.0 / 6) + std::log(3.0 / 5) + std::log(2.0 / 4) + std::log(1.0 / 3)) / 4);
  CHECK(std::abs(r.bleu - expected) < 1e-12);
}

TEST_CASE("bleu range, permutation invariance and report parsing") {
  std::mt19937_64 rng(30);
  std::vector<TokenSeq> hyps, refs;
  for (int i = 0; i < 30; ++i) {
    TokenSeq h, r;
    const int len = 4 + static_cast<int>(rng() % 6);
    for (int k = 0; k < len; ++k) {
      r.push_back(std::string(1, static_cast<char>('a' + rng() % 4)));
      h.push_back(rng() % 3 ? r.back() : std::string(1, static_cast<char>('a' + rng() % 4)));
    }
    hyps.push_back(h);
    refs.push_back(r);
  }
  const auto base = bleu(hyps, refs);
  CHECK(base.bleu >= 0);
  CHECK(base.bleu <= 100);
  CHECK(bleu(refs, refs).bleu == 100.0);

  std::vector<std::size_t> order(hyps.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<TokenSeq> ph, pr;
  for (auto i : order) {
    ph.push_back(hyps[i]);
    pr.push_back(refs[i]);
  }
  CHECK(bleu(ph, pr).bleu == base.bleu);

  const auto text = base.to_string();
  const auto parsed = BleuReport::parse(text);
  CHECK(parsed.to_string() == text);
  CHECK(std::abs(parsed.bleu - base.bleu) <= 0.005);
  CHECK(parsed.hyp_len == base.hyp_len);
  CHECK_THROWS_AS(BleuReport::parse("BLEU = nonsense"), InputError);
}
