#include <doctest.h>

#include <algorithm>
#include <random>

#include "mwnmt/decoder.hpp"
#include "mwnmt/errors.hpp"
#include "mwnmt/subword.hpp"
#include "test_util.hpp"

using namespace mwnmt;
using namespace mwnmt::testing;

namespace {

constexpr int kWord = 3, kHidden = 4, kD = 5, kAdp = 4, kOut = 4;

struct Fixture {
  SharedAttention att;
  FeedForward shared_init;
  SharedAdaptor adaptor;
  EncoderParams enc;
  DecoderParams dec;

  explicit Fixture(std::uint64_t seed, int target_vocab = 9, double scale = 0.5) {
    ParamInit init(seed, scale);
    att = SharedAttention::make(init, kD, kD);
    shared_init = FeedForward::make(init, kD, kD, kD);
    adaptor = SharedAdaptor::make(init, kD, kAdp);
    enc = EncoderParams::make(init, "src", 10, kWord, kHidden, kD);
    dec = DecoderParams::make(init, "tgt", target_vocab, kWord, kHidden, kD, kD, kAdp, kOut);
  }

  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out;
    att.collect("att", out);
    shared_init.collect("init", out);
    adaptor.collect("adp", out);
    enc.collect("enc", out);
    dec.collect("dec", out);
    return out;
  }

  Tensor logprob(const std::vector<int>& source, const std::vector<int>& target) const {
    auto ctx = encode(enc, shared_init, source);
    return teacher_forced_logprob(dec, adaptor, AttentionView::build(att, ctx), init_state(dec, ctx.init_vector),
                                  TokenMatrix::single(target));
  }
};

void zero(Tensor& t) { std::fill(t.data_mut().begin(), t.data_mut().end(), 0.0); }

double log_softmax_at(const Vec& logits, int k) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - m);
  return logits[k] - m - std::log(z);
}

}  // namespace

TEST_CASE("init_state examples") {
  Fixture f(1);
  std::mt19937_64 rng(1);
  auto h_hat = random_tensor({2, kD}, rng);
  CHECK(init_state(f.dec, h_hat).shape() == Shape{2, kHidden});
  CHECK_THROWS_AS(init_state(f.dec, random_tensor({2, kD + 1}, rng)), DimensionError);

  std::vector<NamedTensor> named;
  f.dec.init_map.collect("init", named);
  named.push_back({"h^", h_hat});
  auto r = check_gradients([&] { return nd::sum(nd::tanh_elem(init_state(f.dec, h_hat))); }, named);
  CHECK(r.max_rel_error < 1e-4);

  zero(f.dec.init_map.hidden.w);
  zero(f.dec.init_map.output.w);
  CHECK(copy_data(init_state(f.dec, h_hat)) == Vec(2 * kHidden, 0.0));
}

TEST_CASE("att_query examples") {
  Fixture f(2);
  std::mt19937_64 rng(2);
  auto z = random_tensor({1, kHidden}, rng);
  const std::vector<int> prev = {5};
  auto q = att_query(f.dec, z, prev);
  CHECK(q.shape() == Shape{1, kD});
  const Vec expected = ref_ff(ref_concat(copy_data(z), ref_row(f.dec.embed, 5)), f.dec.att_map);
  CHECK(ref_max_abs_diff(copy_data(q), expected) < 1e-14);
  CHECK_THROWS_AS(att_query(f.dec, z, std::vector<int>{9}), IndexError);

  zero(f.dec.att_map.hidden.w);
  zero(f.dec.att_map.output.w);
  CHECK(copy_data(att_query(f.dec, z, prev)) == Vec(kD, 0.0));
}

TEST_CASE("decoder step shapes and zero output layer") {
  Fixture f(3);
  std::mt19937_64 rng(3);
  auto z = random_tensor({2, kHidden}, rng);
  auto c = random_tensor({2, kD}, rng);
  const std::vector<int> prev = {1, 6};
  auto step = decoder_step(f.dec, f.adaptor, z, prev, c);
  CHECK(step.state.shape() == Shape{2, kHidden});
  CHECK(step.logits.shape() == Shape{2, 9});
  CHECK_THROWS_AS(decoder_step(f.dec, f.adaptor, z, prev, random_tensor({2, kD + 1}, rng)), DimensionError);
  CHECK_THROWS_AS(decoder_step(f.dec, f.adaptor, random_tensor({2, kHidden + 1}, rng), prev, c), DimensionError);

  // Straight-line step.
  for (int r = 0; r < 2; ++r) {
    const Vec a = ref_affine(ref_row(c, r), f.adaptor.map);
    const Vec e = ref_row(f.dec.embed, prev[r]);
    const Vec s = ref_gru(ref_row(z, r), ref_concat(e, a), f.dec.gru);
    const Vec logits = ref_affine(ref_tanh(ref_affine(ref_concat(ref_concat(s, a), e), f.dec.out_hidden)), f.dec.out_vocab);
    CHECK(ref_max_abs_diff(ref_row(step.state, r), s) < 1e-14);
    CHECK(ref_max_abs_diff(ref_row(step.logits, r), logits) < 1e-14);
  }

  zero(f.dec.out_vocab.w);
  auto flat = decoder_step(f.dec, f.adaptor, z, prev, c);
  for (double l : flat.logits.data()) CHECK(l == flat.logits.data()[0]);
}

TEST_CASE("uniform single-symbol target gives log(1/7)") {
  Fixture f(4, 7);
  zero(f.dec.out_vocab.w);
  CHECK(f.logprob({4, 5}, {Vocabulary::kEos}).item() == doctest::Approx(std::log(1.0 / 7)).epsilon(1e-14));
}

TEST_CASE("teacher-forced logprob equals the sum of independent step cross-entropies") {
  Fixture f(5);
  const std::vector<int> source = {4, 8, 6, 5};
  const std::vector<int> target = {7, 4, Vocabulary::kEos};
  auto ctx = encode(f.enc, f.shared_init, source);
  auto view = AttentionView::build(f.att, ctx);
  Tensor z = init_state(f.dec, ctx.init_vector);

  double expected = 0;
  int prev = Vocabulary::kBos;
  for (int y : target) {
    auto step = advance(f.dec, f.adaptor, view, z, std::vector<int>{prev});
    expected += log_softmax_at(copy_data(step.logits), y);
    z = step.state;
    prev = y;
  }
  const double got = f.logprob(source, target).item();
  CHECK(std::abs(got - expected) < 1e-12);
  CHECK(got <= 0);
}

TEST_CASE("step distributions normalize and attention weights sum to one") {
  Fixture f(6);
  auto ctx = encode(f.enc, f.shared_init, std::vector<int>{4, 5, 6});
  auto view = AttentionView::build(f.att, ctx);
  Tensor z = init_state(f.dec, ctx.init_vector);
  int prev = Vocabulary::kBos;
  for (int t = 0; t < 6; ++t) {
    auto step = advance(f.dec, f.adaptor, view, z, std::vector<int>{prev});
    auto p = nd::softmax(nd::reshape(step.logits, {9}));
    double total = 0, wsum = 0;
    for (double v : p.data()) total += v;
    for (double w : step.weights.data()) wsum += w;
    CHECK(std::abs(total - 1.0) < 1e-10);
    CHECK(std::abs(wsum - 1.0) < 1e-10);
    z = step.state;
    prev = 4 + t % 5;
  }
}

TEST_CASE("logprob is non-positive and permutation sensitive") {
  Fixture f(7);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> target = {4, 5, 6, 7, 8};
    std::shuffle(target.begin(), target.end(), rng);
    target.push_back(Vocabulary::kEos);
    const double lp = f.logprob({4, 5, 6}, target).item();
    CHECK(lp <= 0);
    auto shuffled = target;
    std::swap(shuffled[0], shuffled[1]);
    CHECK(f.logprob({4, 5, 6}, shuffled).item() != lp);
  }
}

TEST_CASE("padded target rows match single-row logprobs") {
  Fixture f(8);
  const std::vector<int> source = {4, 5};
  TokenMatrix target;
  target.rows = 2;
  target.cols = 4;
  target.ids = {6, 7, 8, Vocabulary::kEos, 5, Vocabulary::kEos, Vocabulary::kPad, Vocabulary::kPad};
  target.lengths = {4, 2};
  TokenMatrix src;
  src.rows = 2;
  src.cols = 2;
  src.ids = {4, 5, 4, 5};
  src.lengths = {2, 2};
  auto ctx = encode(f.enc, f.shared_init, src);
  auto lp = teacher_forced_logprob(f.dec, f.adaptor, AttentionView::build(f.att, ctx), init_state(f.dec, ctx.init_vector),
                                   target);
  CHECK(std::abs(lp.at(0) - f.logprob(source, {6, 7, 8, Vocabulary::kEos}).item()) < 1e-13);
  CHECK(std::abs(lp.at(1) - f.logprob(source, {5, Vocabulary::kEos}).item()) < 1e-13);
}

TEST_CASE("full encoder-decoder loss gradients match finite differences") {
  Fixture f(9, 6, 0.3);
  auto r = check_gradients([&] { return f.logprob({4, 7, 5}, {5, 4, Vocabulary::kEos}); }, f.named());
  INFO(r.worst << " " << r.max_rel_error);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("output layer names") {
  CHECK(DecoderParams::is_output_layer("out.hidden.W"));
  CHECK(DecoderParams::is_output_layer("out.vocab.b"));
  CHECK_FALSE(DecoderParams::is_output_layer("gru.w_r"));
  CHECK_FALSE(DecoderParams::is_output_layer("embed"));
}
