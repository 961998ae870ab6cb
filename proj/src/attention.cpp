#include "mwnmt/attention.hpp"

#include "mwnmt/errors.hpp"

namespace mwnmt {

SharedAttention SharedAttention::make(ParamInit& init, int att_dim, int score_dim) {
  SharedAttention a;
  a.w_h = init.weight({att_dim, score_dim});
  a.w_z = init.weight({att_dim, score_dim});
  a.v = init.weight({score_dim});
  return a;
}

void SharedAttention::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".W_h", w_h});
  out.push_back({prefix + ".W_z", w_z});
  out.push_back({prefix + ".v", v});
}

Tensor attention_keys(const SharedAttention& att, const Tensor& att_contexts) {
  if (att_contexts.rank() != 3 || att_contexts.dim(2) != att.att_dim()) {
    throw DimensionError("attention_keys: expected [B,T," + std::to_string(att.att_dim()) + "], got " +
                         shape_str(att_contexts.shape()));
  }
  const int b = att_contexts.dim(0), t = att_contexts.dim(1);
  const Tensor flat = nd::reshape(att_contexts, {b * t, att.att_dim()});
  return nd::reshape(nd::matmul(flat, att.w_h), {b, t, att.score_dim()});
}

Tensor attention_score(const SharedAttention& att, const Tensor& keys, const Tensor& query) {
  if (query.rank() != 2 || query.dim(1) != att.att_dim()) {
    throw DimensionError("attention_score: query must be [B," + std::to_string(att.att_dim()) + "], got " +
                         shape_str(query.shape()));
  }
  return nd::additive_scores(keys, nd::matmul(query, att.w_z), att.v);
}

AttentionStep attend(const Tensor& scores, const Tensor& contexts, std::span<const int> lengths) {
  if (scores.rank() != 2 || contexts.rank() != 3 || scores.dim(0) != contexts.dim(0) ||
      scores.dim(1) != contexts.dim(1)) {
    throw DimensionError("attend: scores " + shape_str(scores.shape()) + " do not match contexts " +
                         shape_str(contexts.shape()));
  }
  Tensor weights = nd::masked_softmax(scores, lengths);
  Tensor context = nd::weighted_sum(weights, contexts);
  return {std::move(weights), std::move(context)};
}

}  // namespace mwnmt
