#include "mwnmt/decoder.hpp"

#include "mwnmt/errors.hpp"
#include "mwnmt/subword.hpp"

namespace mwnmt {

SharedAdaptor SharedAdaptor::make(ParamInit& init, int context_dim, int out_dim) {
  return {Affine::make(init, context_dim, out_dim)};
}

DecoderParams DecoderParams::make(ParamInit& init, std::string language, int vocab, int word_dim, int hidden,
                                  int init_in_dim, int att_dim, int adaptor_dim, int output_hidden) {
  DecoderParams p;
  p.language = std::move(language);
  p.embed = init.weight({vocab, word_dim});
  p.init_map = FeedForward::make(init, init_in_dim, hidden, hidden);
  p.att_map = FeedForward::make(init, hidden + word_dim, att_dim, att_dim);
  p.gru = GruParams::make(init, word_dim + adaptor_dim, hidden);
  p.out_hidden = Affine::make(init, hidden + adaptor_dim + word_dim, output_hidden);
  p.out_vocab = Affine::make(init, output_hidden, vocab);
  return p;
}

void DecoderParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".embed", embed});
  init_map.collect(prefix + ".init", out);
  att_map.collect(prefix + ".att", out);
  gru.collect(prefix + ".gru", out);
  out_hidden.collect(prefix + ".out.hidden", out);
  out_vocab.collect(prefix + ".out.vocab", out);
}

bool DecoderParams::is_output_layer(const std::string& relative_name) { return relative_name.rfind("out.", 0) == 0; }

AttentionView AttentionView::build(const SharedAttention& attention, const ContextSet& ctx) {
  return {&attention, attention_keys(attention, ctx.att_contexts), ctx.contexts, ctx.lengths};
}

Tensor init_state(const DecoderParams& dec, const Tensor& h_hat) {
  if (h_hat.rank() != 2 || h_hat.dim(1) != dec.init_map.hidden.in_dim()) {
    throw DimensionError("init_state: expected [B," + std::to_string(dec.init_map.hidden.in_dim()) + "], got " +
                         shape_str(h_hat.shape()));
  }
  return dec.init_map(h_hat);
}

namespace {

void check_state(const DecoderParams& dec, const Tensor& z_prev, std::size_t rows) {
  if (z_prev.rank() != 2 || z_prev.dim(1) != dec.hidden_dim() || z_prev.dim(0) != static_cast<int>(rows)) {
    throw DimensionError("decoder " + dec.language + ": state " + shape_str(z_prev.shape()) + " does not match " +
                         std::to_string(rows) + " rows of hidden size " + std::to_string(dec.hidden_dim()));
  }
}

Tensor query_from(const DecoderParams& dec, const Tensor& z_prev, const Tensor& prev_embed) {
  return dec.att_map(nd::concat({z_prev, prev_embed}));
}

DecoderStep step_from(const DecoderParams& dec, const SharedAdaptor& adaptor, const Tensor& z_prev,
                      const Tensor& prev_embed, const Tensor& context) {
  if (context.rank() != 2 || context.dim(0) != z_prev.dim(0) || context.dim(1) != adaptor.map.in_dim()) {
    throw DimensionError("decoder_step: context " + shape_str(context.shape()) + " must be [B," +
                         std::to_string(adaptor.map.in_dim()) + "]");
  }
  const Tensor adapted = adaptor(context);
  Tensor state = gru_step(z_prev, nd::concat({prev_embed, adapted}), dec.gru);
  const Tensor hidden = nd::tanh_elem(dec.out_hidden(nd::concat({state, adapted, prev_embed})));
  Tensor logits = dec.out_vocab(hidden);
  return {std::move(state), std::move(logits), Tensor()};
}

}  // namespace

Tensor att_query(const DecoderParams& dec, const Tensor& z_prev, std::span<const int> prev_ids) {
  check_state(dec, z_prev, prev_ids.size());
  return query_from(dec, z_prev, nd::embedding_lookup(dec.embed, prev_ids));
}

DecoderStep decoder_step(const DecoderParams& dec, const SharedAdaptor& adaptor, const Tensor& z_prev,
                         std::span<const int> prev_ids, const Tensor& context) {
  check_state(dec, z_prev, prev_ids.size());
  return step_from(dec, adaptor, z_prev, nd::embedding_lookup(dec.embed, prev_ids), context);
}

DecoderStep advance(const DecoderParams& dec, const SharedAdaptor& adaptor, const AttentionView& view,
                    const Tensor& z_prev, std::span<const int> prev_ids) {
  check_state(dec, z_prev, prev_ids.size());
  const Tensor prev_embed = nd::embedding_lookup(dec.embed, prev_ids);
  const Tensor query = query_from(dec, z_prev, prev_embed);
  AttentionStep att = attend(attention_score(*view.attention, view.keys, query), view.contexts, view.lengths);
  DecoderStep out = step_from(dec, adaptor, z_prev, prev_embed, att.context);
  out.weights = std::move(att.weights);
  return out;
}

Tensor teacher_forced_logprob(const DecoderParams& dec, const SharedAdaptor& adaptor, const AttentionView& view,
                              const Tensor& z0, const TokenMatrix& target) {
  if (target.rows != z0.dim(0) || target.cols < 1) {
    throw DimensionError("teacher_forced_logprob: " + std::to_string(target.rows) + " target rows for initial state " +
                         shape_str(z0.shape()));
  }
  Tensor state = z0;
  Tensor total;
  std::vector<int> prev(target.rows, Vocabulary::kBos);
  for (int t = 0; t < target.cols; ++t) {
    DecoderStep step = advance(dec, adaptor, view, state, prev);
    const std::vector<int> gold = target.column(t);
    std::vector<double> mask(target.rows);
    for (int r = 0; r < target.rows; ++r) mask[r] = t < target.lengths[r] ? 1.0 : 0.0;
    Tensor nll = nd::cross_entropy_from_logits(step.logits, gold, mask);
    total = total.defined() ? nd::add(total, nll) : nll;
    state = std::move(step.state);
    prev = gold;
  }
  return nd::scale(total, -1.0);
}

}  // namespace mwnmt
