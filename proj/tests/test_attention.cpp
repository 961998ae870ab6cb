#include <doctest.h>

#include <algorithm>
#include <random>

#include "mwnmt/attention.hpp"
#include "mwnmt/errors.hpp"
#include "test_util.hpp"

using namespace mwnmt;
using namespace mwnmt::testing;

namespace {

std::vector<double> scores_of(const SharedAttention& att, const Tensor& att_contexts, const Tensor& query) {
  return copy_data(attention_score(att, attention_keys(att, att_contexts), query));
}

}  // namespace

TEST_CASE("zero score vector gives zero scores") {
  std::mt19937_64 rng(1);
  ParamInit init(2);
  auto att = SharedAttention::make(init, 4, 5);
  att.v = Tensor::zeros({5}, true);
  for (double e : scores_of(att, random_tensor({1, 3, 4}, rng), random_tensor({1, 4}, rng))) CHECK(e == 0.0);
}

TEST_CASE("single source position gives one score") {
  std::mt19937_64 rng(1);
  ParamInit init(3);
  auto att = SharedAttention::make(init, 4, 5);
  auto s = attention_score(att, attention_keys(att, random_tensor({1, 1, 4}, rng)), random_tensor({1, 4}, rng));
  CHECK(s.shape() == Shape{1, 1});
}

TEST_CASE("scores match a straight-line recomputation") {
  std::mt19937_64 rng(4);
  ParamInit init(5, 0.5);
  auto att = SharedAttention::make(init, 3, 6);
  auto h_tilde = random_tensor({1, 4, 3}, rng);
  auto z_tilde = random_tensor({1, 3}, rng);
  const auto got = scores_of(att, h_tilde, z_tilde);
  const Vec wz = ref_matvec(copy_data(z_tilde), att.w_z);
  for (int i = 0; i < 4; ++i) {
    const Vec pre = ref_add(ref_matvec(ref_row(nd::reshape(h_tilde, {4, 3}), i), att.w_h), wz);
    double e = 0;
    for (int s = 0; s < 6; ++s) e += att.v.at(s) * std::tanh(pre[s]);
    CHECK(std::abs(got[i] - e) < 1e-13);
  }
}

TEST_CASE("score dimension mismatch") {
  ParamInit init(1);
  auto att = SharedAttention::make(init, 3, 4);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(attention_keys(att, random_tensor({1, 2, 5}, rng)), DimensionError);
  auto keys = attention_keys(att, random_tensor({1, 2, 3}, rng));
  CHECK_THROWS_AS(attention_score(att, keys, random_tensor({1, 5}, rng)), DimensionError);
}

TEST_CASE("attend examples") {
  auto ctx = Tensor::from_data({1, 2, 2}, {2, 0, 0, 2});
  auto uniform = attend(Tensor::from_data({1, 2}, {0.7, 0.7}), ctx, std::vector<int>{2});
  CHECK(uniform.context.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(uniform.context.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  auto dominant = attend(Tensor::from_data({1, 2}, {1e3, 0}), ctx, std::vector<int>{2});
  CHECK(std::abs(dominant.context.at(0, 0) - 2.0) < 1e-6);
  CHECK(std::abs(dominant.context.at(0, 1)) < 1e-6);

  CHECK_THROWS_AS(attend(Tensor::from_data({1, 3}, {0, 0, 0}), ctx, std::vector<int>{2}), DimensionError);
}

TEST_CASE("attend matches brute force and stays in the convex hull") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int tx = 3, d = 4;
    auto scores = random_tensor({1, tx}, rng, -3, 3, false);
    auto ctx = random_tensor({1, tx, d}, rng, -2, 2, false);
    auto step = attend(scores, ctx, std::vector<int>{tx});

    double z = 0;
    for (int i = 0; i < tx; ++i) z += std::exp(scores.at(0, i));
    double total = 0;
    for (int i = 0; i < tx; ++i) {
      const double alpha = std::exp(scores.at(0, i)) / z;
      CHECK(step.weights.at(0, i) >= 0);
      CHECK(std::abs(step.weights.at(0, i) - alpha) < 1e-14);
      total += step.weights.at(0, i);
    }
    CHECK(std::abs(total - 1.0) < 1e-10);

    for (int k = 0; k < d; ++k) {
      double brute = 0, lo = INFINITY, hi = -INFINITY;
      for (int i = 0; i < tx; ++i) {
        const double h = ctx.data()[i * d + k];
        brute += std::exp(scores.at(0, i)) / z * h;
        lo = std::min(lo, h);
        hi = std::max(hi, h);
      }
      CHECK(std::abs(step.context.at(0, k) - brute) < 1e-13);
      CHECK(step.context.at(0, k) >= lo - 1e-15);
      CHECK(step.context.at(0, k) <= hi + 1e-15);
    }
  }
}

TEST_CASE("padded positions get zero weight") {
  std::mt19937_64 rng(6);
  auto ctx = random_tensor({2, 3, 2}, rng, -1, 1, false);
  auto step = attend(random_tensor({2, 3}, rng, -1, 1, false), ctx, std::vector<int>{3, 1});
  CHECK(step.weights.at(1, 0) == 1.0);
  CHECK(step.weights.at(1, 1) == 0.0);
  CHECK(step.context.at(1, 0) == ctx.data()[6]);
}

TEST_CASE("score and attend gradients match finite differences") {
  std::mt19937_64 rng(10);
  ParamInit init(11, 0.3);
  auto att = SharedAttention::make(init, 3, 4);
  auto h_tilde = random_tensor({2, 3, 3}, rng);
  auto z_tilde = random_tensor({2, 3}, rng);
  auto ctx = random_tensor({2, 3, 2}, rng);
  const std::vector<int> lengths = {3, 2};
  auto weights = random_tensor({2, 2}, rng, -1, 1, false);
  auto loss = [&] {
    auto step = attend(attention_score(att, attention_keys(att, h_tilde), z_tilde), ctx, lengths);
    return nd::sum(nd::mul_elem(step.context, weights));
  };
  auto r = check_gradients(loss, {{"W_h", att.w_h}, {"W_z", att.w_z}, {"v", att.v}, {"h~", h_tilde}, {"z~", z_tilde},
                                  {"h", ctx}});
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}
