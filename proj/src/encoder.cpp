#include "mwnmt/encoder.hpp"

#include <algorithm>
#include <cstdint>

#include "mwnmt/errors.hpp"

namespace mwnmt {

TokenMatrix TokenMatrix::single(std::span<const int> tokens) {
  TokenMatrix m;
  m.rows = 1;
  m.cols = static_cast<int>(tokens.size());
  m.ids.assign(tokens.begin(), tokens.end());
  m.lengths = {m.cols};
  return m;
}

std::vector<int> TokenMatrix::column(int col) const {
  std::vector<int> out(rows);
  for (int r = 0; r < rows; ++r) out[r] = at(r, col);
  return out;
}

EncoderParams EncoderParams::make(ParamInit& init, std::string language, int vocab, int word_dim, int hidden,
                                  int context_dim) {
  EncoderParams p;
  p.language = std::move(language);
  p.embed = init.weight({vocab, word_dim});
  p.forward = GruParams::make(init, word_dim, hidden);
  p.backward = GruParams::make(init, word_dim, hidden);
  p.adapt = Affine::make(init, 2 * hidden, context_dim);
  return p;
}

void EncoderParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".embed", embed});
  forward.collect(prefix + ".fwd", out);
  backward.collect(prefix + ".bwd", out);
  adapt.collect(prefix + ".adapt", out);
}

void check_source(const EncoderParams& enc, const TokenMatrix& source) {
  if (source.rows < 1 || source.cols < 1) throw InputError("encode: empty source sequence");
  if (static_cast<int>(source.lengths.size()) != source.rows) {
    throw InputError("encode: " + std::to_string(source.lengths.size()) + " lengths for " +
                     std::to_string(source.rows) + " rows");
  }
  for (int r = 0; r < source.rows; ++r) {
    if (source.lengths[r] < 1 || source.lengths[r] > source.cols) {
      throw InputError("encode: row " + std::to_string(r) + " has invalid length " + std::to_string(source.lengths[r]));
    }
    for (int t = 0; t < source.lengths[r]; ++t) {
      const int id = source.at(r, t);
      if (id < 0 || id >= enc.vocab_size()) {
        throw IndexError("encode: id " + std::to_string(id) + " at row " + std::to_string(r) + " position " +
                         std::to_string(t) + " outside source vocabulary of size " +
                         std::to_string(enc.vocab_size()) + " (" + enc.language + ")");
      }
    }
  }
}

BidirectionalStates run_bidirectional(const EncoderParams& enc, const TokenMatrix& source) {
  check_source(enc, source);
  const int rows = source.rows, steps = source.cols, hidden = enc.hidden_dim();
  std::vector<Tensor> embedded;
  embedded.reserve(steps);
  for (int t = 0; t < steps; ++t) embedded.push_back(nd::embedding_lookup(enc.embed, source.column(t)));

  auto valid_rows = [&](int t, std::vector<std::uint8_t>& keep) {
    bool all = true;
    for (int r = 0; r < rows; ++r) {
      keep[r] = t < source.lengths[r];
      all = all && keep[r];
    }
    return all;
  };

  BidirectionalStates states;
  states.forward.resize(steps);
  states.backward.resize(steps);
  std::vector<std::uint8_t> keep(rows);

  // Rows past their length carry the previous state unchanged, so each
  // backward chain effectively starts at its own last token from zero.
  Tensor f = Tensor::zeros({rows, hidden});
  for (int t = 0; t < steps; ++t) {
    Tensor next = gru_step(f, embedded[t], enc.forward);
    f = valid_rows(t, keep) ? next : nd::where_rows(keep, next, f);
    states.forward[t] = f;
  }
  Tensor b = Tensor::zeros({rows, hidden});
  for (int t = steps - 1; t >= 0; --t) {
    Tensor next = gru_step(b, embedded[t], enc.backward);
    b = valid_rows(t, keep) ? next : nd::where_rows(keep, next, b);
    states.backward[t] = b;
  }
  return states;
}

Tensor phi_init(const FeedForward& shared_init, const Tensor& first_context) {
  if (first_context.rank() != 2 || first_context.dim(1) != shared_init.hidden.in_dim()) {
    throw DimensionError("phi_init: expected [B," + std::to_string(shared_init.hidden.in_dim()) + "], got " +
                         shape_str(first_context.shape()));
  }
  return shared_init(first_context);
}

ContextSet encode(const EncoderParams& enc, const FeedForward& shared_init, const TokenMatrix& source) {
  const BidirectionalStates states = run_bidirectional(enc, source);
  const int steps = source.cols;
  std::vector<Tensor> contexts;
  contexts.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    contexts.push_back(enc.adapt(nd::concat({states.forward[t], states.backward[t]})));
  }
  ContextSet out;
  out.init_vector = phi_init(shared_init, contexts.front());
  out.contexts = nd::stack_steps(contexts);
  out.att_contexts = nd::tanh_elem(out.contexts);
  out.lengths = source.lengths;
  return out;
}

ContextSet encode(const EncoderParams& enc, const FeedForward& shared_init, std::span<const int> tokens) {
  if (tokens.empty()) throw InputError("encode: empty source sequence");
  return encode(enc, shared_init, TokenMatrix::single(tokens));
}

}  // namespace mwnmt
