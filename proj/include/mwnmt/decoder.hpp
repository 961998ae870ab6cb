#pragma once

// Per-target-language GRU decoder.
//
// One step at time t, given the previous state z and previous symbol y:
//   z~   = varphi_att([z; E_y[y]])                 attention query
//   c_t  = shared attention over the source contexts
//   a_t  = f_adp(c_t)                              shared across decoders
//   z'   = GRU(z, [E_y[y]; a_t])
//   logits = W_v tanh(W_o [z'; a_t; E_y[y]] + b_o) + b_v
// The first step uses BOS and z_0 = varphi_init(h^), where h^ is the shared
// phi_init output of the encoder.

#include <span>
#include <string>
#include <vector>

#include "mwnmt/attention.hpp"
#include "mwnmt/encoder.hpp"
#include "mwnmt/layers.hpp"

namespace mwnmt {

struct SharedAdaptor {
  Affine map;  // [d, decoder context-input dim]

  static SharedAdaptor make(ParamInit& init, int context_dim, int out_dim);
  Tensor operator()(const Tensor& context) const { return map(context); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const { map.collect(prefix, out); }
};

struct DecoderParams {
  std::string language;
  Tensor embed;          // [|V_y|, word_dim]
  FeedForward init_map;  // h^ -> z_0
  FeedForward att_map;   // [z; E_y[y]] -> z~ (d_att)
  GruParams gru;         // input [E_y[y]; f_adp(c)]
  Affine out_hidden;     // [z; f_adp(c); E_y[y]] -> output hidden
  Affine out_vocab;      // output hidden -> |V_y|

  static DecoderParams make(ParamInit& init, std::string language, int vocab, int word_dim, int hidden,
                            int init_in_dim, int att_dim, int adaptor_dim, int output_hidden);
  int vocab_size() const { return embed.dim(0); }
  int word_dim() const { return embed.dim(1); }
  int hidden_dim() const { return gru.hidden_dim(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  // Names (relative to prefix) that form the output layer g.
  static bool is_output_layer(const std::string& relative_name);
};

// Source-side view the decoder attends over; keys are computed once.
struct AttentionView {
  const SharedAttention* attention = nullptr;
  Tensor keys;      // [B, T, score_dim]
  Tensor contexts;  // [B, T, d]
  std::vector<int> lengths;

  static AttentionView build(const SharedAttention& attention, const ContextSet& ctx);
};

struct DecoderStep {
  Tensor state;    // [B, hidden]
  Tensor logits;   // [B, |V_y|]
  Tensor weights;  // [B, T]
};

Tensor init_state(const DecoderParams& dec, const Tensor& h_hat);
Tensor att_query(const DecoderParams& dec, const Tensor& z_prev, std::span<const int> prev_ids);

// State update and logits for a known context vector.
DecoderStep decoder_step(const DecoderParams& dec, const SharedAdaptor& adaptor, const Tensor& z_prev,
                         std::span<const int> prev_ids, const Tensor& context);

// Query, attention, state update and logits.
DecoderStep advance(const DecoderParams& dec, const SharedAdaptor& adaptor, const AttentionView& view,
                    const Tensor& z_prev, std::span<const int> prev_ids);

// Per-row sum_t log p(y_t | y_<t, X) with ground-truth prefixes, as [B].
// Positions at or beyond target.lengths[b] contribute zero.
Tensor teacher_forced_logprob(const DecoderParams& dec, const SharedAdaptor& adaptor, const AttentionView& view,
                              const Tensor& z0, const TokenMatrix& target);

}  // namespace mwnmt
