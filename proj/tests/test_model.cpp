#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <numeric>
#include <set>

#include "mwnmt/checkpoint.hpp"
#include "mwnmt/errors.hpp"
#include "mwnmt/model.hpp"
#include "mwnmt/trainer.hpp"
#include "test_util.hpp"

using namespace mwnmt;
using namespace mwnmt::testing;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.word_dim = 4;
  d.enc_hidden = 5;
  d.dec_hidden = 6;
  d.context_dim = 7;
  d.att_dim = 7;
  d.output_hidden = 5;
  return d;
}

std::vector<LanguageSpec> langs(std::initializer_list<const char*> names, int vocab) {
  std::vector<LanguageSpec> out;
  for (const char* n : names) out.push_back({n, vocab, 0});
  return out;
}

MultiWayModel grid_model(int n, int m, const ModelDims& dims, int vocab) {
  std::vector<LanguageSpec> src, tgt;
  for (int i = 0; i < n; ++i) src.push_back({"s" + std::to_string(i), vocab, 0});
  for (int j = 0; j < m; ++j) tgt.push_back({"t" + std::to_string(j), vocab, 0});
  return MultiWayModel(dims, src, tgt, 1);
}

Batch random_batch(const std::string& s, const std::string& t, int rows, int vocab, std::uint64_t seed,
                   int fixed_target_len = 0) {
  std::mt19937_64 rng(seed);
  std::vector<Example> ex;
  for (int r = 0; r < rows; ++r) {
    Example e;
    const int sl = 1 + static_cast<int>(rng() % 4);
    const int tl = fixed_target_len > 0 ? fixed_target_len - 1 : 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < sl; ++i) e.source.push_back(4 + static_cast<int>(rng() % (vocab - 4)));
    for (int i = 0; i < tl; ++i) e.target.push_back(4 + static_cast<int>(rng() % (vocab - 4)));
    e.source.push_back(Vocabulary::kEos);
    e.target.push_back(Vocabulary::kEos);
    ex.push_back(e);
  }
  return make_batch(s, t, ex);
}

std::map<std::string, std::vector<double>> snapshot(const MultiWayModel& m) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : m.parameters()) out[p.name] = copy_data(p.tensor);
  return out;
}

bool has_nonzero_grad(const Tensor& t) {
  for (double g : t.grad()) {
    if (g != 0.0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("dims profiles, validation and config round trip") {
  CHECK(ModelDims::desk() == ModelDims{32, 64, 64, 96, 96, 64, 0});
  const auto paper = ModelDims::paper();
  CHECK(paper.word_dim == 620);
  CHECK(paper.enc_hidden == 1000);
  CHECK(paper.context_dim == 1200);
  CHECK(paper.att_dim == 1200);
  CHECK(paper.output_hidden == 1000);
  CHECK(ModelDims::from_config(paper.to_config()) == paper);

  auto bad = tiny_dims();
  bad.att_dim = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_dims();
  bad.word_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("construction validates languages") {
  CHECK_THROWS_AS(MultiWayModel(tiny_dims(), langs({"a", "a"}, 10), langs({"b"}, 10), 1), ConfigError);
  CHECK_THROWS_AS(MultiWayModel(tiny_dims(), langs({"a"}, 4), langs({"b"}, 10), 1), ConfigError);
  CHECK_THROWS_AS(MultiWayModel(tiny_dims(), {}, langs({"b"}, 10), 1), ConfigError);

  MultiWayModel m(tiny_dims(), langs({"a", "b"}, 10), langs({"x"}, 10), 1);
  try {
    m.encoder("zz");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("zz") != std::string::npos);
    CHECK(msg.find("a") != std::string::npos);
  }
  CHECK(m.pairs().size() == 2);
  CHECK_THROWS_AS(forward_pair(m, random_batch("a", "q", 2, 10, 1)), ConfigError);
}

TEST_CASE("shared components appear once regardless of N and M") {
  for (auto [n, m] : {std::pair{1, 1}, {2, 3}, {4, 2}}) {
    auto model = grid_model(n, m, tiny_dims(), 12);
    std::set<std::string> shared;
    for (const auto& p : model.parameters()) {
      if (p.name.rfind("shared.", 0) == 0) CHECK(shared.insert(p.name).second);
    }
    CHECK(shared.size() == 9);  // att W_h W_z v, init 2x(W,b), adp W b
    CHECK(model.pairs().size() == static_cast<std::size_t>(n * m));
  }
}

TEST_CASE("census matches an exhaustive sum over parameter arrays") {
  ModelDims dims;
  dims.word_dim = 8;
  dims.enc_hidden = 16;
  dims.dec_hidden = 16;
  dims.context_dim = 24;
  dims.att_dim = 24;
  dims.output_hidden = 16;
  for (auto [n, m] : {std::pair{1, 1}, {2, 2}, {3, 1}}) {
    auto model = grid_model(n, m, dims, 50);
    long total = 0, shared = 0;
    std::map<std::string, long> per_lang;
    for (const auto& p : model.parameters()) {
      long size = 1;
      for (int d : p.tensor.shape()) size *= d;
      total += size;
      if (p.name.rfind("shared.", 0) == 0) shared += size;
      else per_lang[p.name.substr(0, p.name.find('.', 4))] += size;
    }
    auto c = census(model);
    CHECK(c.total == total);
    CHECK(c.shared == shared);
    CHECK(c.total == c.encoder_total() + c.decoder_total() + c.shared);
    CHECK(c.total == predicted_multiway(n, m, dims, 50));
    for (const auto& [name, count] : c.encoders) CHECK(per_lang["enc." + name] == count);
    for (const auto& [name, count] : c.decoders) CHECK(per_lang["dec." + name] == count);
    long components = 0;
    for (const auto& [_, count] : c.components) components += count;
    CHECK(components == total);
  }
}

TEST_CASE("parameter growth law") {
  const auto dims = ModelDims::desk();
  const int v = 2004;
  const long e = predicted_encoder(dims, v), d = predicted_decoder(dims, v), s = predicted_shared(dims);
  const long base = census(grid_model(1, 1, dims, v)).total;
  CHECK(base == e + d + s);
  CHECK(predicted_pairwise_total(1, 1, dims, v) == base);
  for (auto [n, m] : {std::pair{1, 1}, {2, 1}, {1, 2}, {2, 2}, {3, 3}}) {
    const long total = census(grid_model(n, m, dims, v)).total;
    CHECK(total == base + (n - 1) * e + (m - 1) * d);
    CHECK(predicted_pairwise_total(n, m, dims, v) == static_cast<long>(n) * m * base);
  }
  CHECK(predicted_multiway(2, 2, dims, v) == 2 * e + 2 * d + s);
  CHECK(predicted_pairwise_total(2, 2, dims, v) == 4 * (e + d + s));
  CHECK(predicted_multiway(2, 2, dims, v) < predicted_pairwise_total(2, 2, dims, v));
  const double ratio = static_cast<double>(predicted_pairwise_total(5, 5, dims, v)) / predicted_multiway(5, 5, dims, v);
  CHECK(ratio > 1.5);
}

TEST_CASE("forward_pair on an untrained model is near the uniform baseline") {
  MultiWayModel m(tiny_dims(), langs({"a"}, 10), langs({"b"}, 10), 3);
  const double nll = forward_pair(m, random_batch("a", "b", 8, 10, 3, 4)).item();
  CHECK(nll > 0.8 * 4 * std::log(10.0));
  CHECK(nll < 1.2 * 4 * std::log(10.0));
}

TEST_CASE("batch of one equals the negated single logprob") {
  MultiWayModel m(tiny_dims(), langs({"a"}, 10), langs({"b"}, 10), 4);
  auto batch = random_batch("a", "b", 1, 10, 4);
  const std::vector<int> src(batch.source.begin(), batch.source.end());
  auto ctx = encode(m.encoder("a"), m.shared_init(), src);
  const auto& dec = m.decoder("b");
  TokenMatrix tgt = target_matrix(batch);
  const double lp = teacher_forced_logprob(dec, m.adaptor(), AttentionView::build(m.attention(), ctx),
                                           init_state(dec, ctx.init_vector), tgt)
                        .item();
  CHECK(forward_pair(m, batch).item() == -lp);
}

TEST_CASE("joint loss is the mean of pair losses") {
  MultiWayModel m(tiny_dims(), langs({"a", "b"}, 11), langs({"x", "y"}, 11), 5);
  std::vector<Batch> bs = {random_batch("a", "x", 3, 11, 1), random_batch("b", "y", 2, 11, 2),
                           random_batch("a", "y", 4, 11, 3)};
  const double l0 = forward_pair(m, bs[0]).item();
  const double l1 = forward_pair(m, bs[1]).item();
  const double l2 = forward_pair(m, bs[2]).item();
  CHECK(joint_loss(m, std::span(bs).first(1)).item() == l0);
  CHECK(std::abs(joint_loss(m, std::span(bs).first(2)).item() - (l0 + l1) / 2) < 1e-12);
  CHECK(std::abs(joint_loss(m, bs).item() - (l0 + l1 + l2) / 3) < 1e-12);
  CHECK_THROWS_AS(joint_loss(m, std::span<const Batch>()), ContractError);
}

TEST_CASE("gradients reach the pair and shared components only") {
  MultiWayModel m(tiny_dims(), langs({"a", "b"}, 11), langs({"x", "y"}, 11), 6);
  m.zero_grad();
  backward(forward_pair(m, random_batch("a", "x", 3, 11, 6)));
  for (const auto& p : m.parameters()) {
    INFO(p.name);
    const bool in_pair = p.name.rfind("shared.", 0) == 0 || p.name.rfind("enc.a.", 0) == 0 || p.name.rfind("dec.x.", 0) == 0;
    if (in_pair) {
      // Embedding tables are sparse but still touched.
      CHECK(has_nonzero_grad(p.tensor));
    } else {
      CHECK_FALSE(has_nonzero_grad(p.tensor));
    }
  }
  std::set<std::string> expected;
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("shared.", 0) == 0 || p.name.rfind("enc.a.", 0) == 0 || p.name.rfind("dec.x.", 0) == 0) {
      expected.insert(p.name);
    }
  }
  std::set<std::string> got;
  for (const auto& p : m.pair_parameters("a", "x")) got.insert(p.name);
  CHECK(got == expected);
}

TEST_CASE("a step on one pair changes the attention another pair sees") {
  MultiWayModel m(tiny_dims(), langs({"a", "b"}, 11), langs({"x", "y"}, 11), 7);
  const std::vector<int> src = {5, 6, 7, Vocabulary::kEos};
  auto weights_for_by = [&] {
    auto ctx = encode(m.encoder("b"), m.shared_init(), src);
    const auto& dec = m.decoder("y");
    auto step = advance(dec, m.adaptor(), AttentionView::build(m.attention(), ctx), init_state(dec, ctx.init_vector),
                        std::vector<int>{Vocabulary::kBos});
    return copy_data(step.weights);
  };
  const auto before_snapshot = snapshot(m);
  const auto before = weights_for_by();
  m.zero_grad();
  backward(forward_pair(m, random_batch("a", "x", 4, 11, 7)));
  Adam adam(0.05);
  adam.update(m.pair_parameters("a", "x"));
  CHECK(weights_for_by() != before);
  const auto after = snapshot(m);
  for (const auto& [name, values] : after) {
    if (name.rfind("enc.b.", 0) == 0 || name.rfind("dec.y.", 0) == 0) CHECK(values == before_snapshot.at(name));
  }
}

TEST_CASE("memorization NLL decreases over 50 full-batch steps") {
  MultiWayModel m(tiny_dims(), langs({"a"}, 12), langs({"b"}, 12), 8);
  auto batch = random_batch("a", "b", 16, 12, 8);
  Adam adam(0.01);
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    m.zero_grad();
    auto loss = forward_pair(m, batch);
    losses.push_back(loss.item());
    backward(loss);
    adam.update(m.parameters());
  }
  // Moving averages over 5 steps are strictly decreasing.
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 5 <= losses.size(); ++i) {
    smooth.push_back(std::accumulate(losses.begin() + i, losses.begin() + i + 5, 0.0) / 5);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] < smooth[i - 1]);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("clone is deep") {
  MultiWayModel m(tiny_dims(), langs({"a"}, 10), langs({"b"}, 10), 9);
  auto c = m.clone();
  CHECK(snapshot(c) == snapshot(m));
  Tensor w = c.attention().v;
  w.data_mut()[0] += 1.0;
  CHECK(snapshot(c) != snapshot(m));
}

TEST_CASE("checkpoint round trip is bitwise") {
  MultiWayModel m(tiny_dims(), {{"a", 10, 3}, {"b", 12, 0}}, langs({"x"}, 9), 10);
  m.set_resources("a", {MergeTable{"a", {{"q", "r"}}}, Vocabulary("a", {"q", "r", "qr"})});
  m.set_resources("x", {std::nullopt, Vocabulary("x", {"u", "v"})});
  const std::string bytes = serialize_model(m);
  auto back = deserialize_model(bytes);
  CHECK(back.dims() == m.dims());
  CHECK(back.sources() == m.sources());
  CHECK(back.targets() == m.targets());
  CHECK(snapshot(back) == snapshot(m));
  CHECK(serialize_model(back) == bytes);
  REQUIRE(back.resources("a") != nullptr);
  CHECK(back.resources("a")->merges->merges.size() == 1);
  CHECK_FALSE(back.resources("x")->merges.has_value());
  CHECK(back.resources("x")->vocab == Vocabulary("x", {"u", "v"}));

  const auto path = std::filesystem::temp_directory_path() / "mwnmt_model_test.ckpt";
  save_checkpoint(m, path.string());
  CHECK(snapshot(load_checkpoint(path.string())) == snapshot(m));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path.string()), InputError);
}

TEST_CASE("corrupt, foreign and future checkpoints are rejected") {
  MultiWayModel m(tiny_dims(), langs({"a"}, 10), langs({"b"}, 10), 11);
  const std::string bytes = serialize_model(m);

  std::string tampered = bytes;
  tampered[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(deserialize_model(tampered), ChecksumError);

  std::string foreign = bytes;
  foreign[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(foreign), InputError);

  std::string future = bytes;
  const std::uint32_t version = kCheckpointVersion + 1;
  std::memcpy(future.data() + 8, &version, 4);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(future.data()), static_cast<uInt>(future.size() - 4)));
  std::memcpy(future.data() + future.size() - 4, &crc, 4);
  CHECK_THROWS_AS(deserialize_model(future), VersionError);

  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, 10)), Error);
}
