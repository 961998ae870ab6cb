#pragma once

// The single attention mechanism shared by every (encoder, decoder) pair.
//
// Scores are e_i = v . tanh(W_h h~_i + W_z z~) over the attention-specific
// encoder vectors h~ and the decoder query z~. The weights are the softmax of
// the scores over the valid source positions, and the time-dependent context
// is the weighted sum of the original (untransformed) context vectors.

#include <span>
#include <string>
#include <vector>

#include "mwnmt/layers.hpp"
#include "mwnmt/ndmath.hpp"

namespace mwnmt {

struct SharedAttention {
  Tensor w_h;  // [d_att, score_dim]
  Tensor w_z;  // [d_att, score_dim]
  Tensor v;    // [score_dim]

  static SharedAttention make(ParamInit& init, int att_dim, int score_dim);
  int att_dim() const { return w_h.dim(0); }
  int score_dim() const { return w_h.dim(1); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct AttentionStep {
  Tensor weights;  // [B, T]
  Tensor context;  // [B, d]
};

// W_h h~ for every source position, computed once per batch of sentences.
// att_contexts [B,T,d_att] -> [B,T,score_dim]
Tensor attention_keys(const SharedAttention& att, const Tensor& att_contexts);

// keys [B,T,score_dim], query z~ [B,d_att] -> scores [B,T]
Tensor attention_score(const SharedAttention& att, const Tensor& keys, const Tensor& query);

// scores [B,T], contexts [B,T,d]; positions at or beyond lengths[b] get zero weight.
AttentionStep attend(const Tensor& scores, const Tensor& contexts, std::span<const int> lengths);

}  // namespace mwnmt
