#pragma once

// Per-source-language bidirectional GRU encoder.
//
// Forward and backward chains both start from zero states. At each position
// the concatenated states are projected into the common context space by the
// encoder's own adaptation layer: h_t = W_adp [fwd_t; bwd_t] + b_adp. The
// attention-specific vectors are tanh(h_t) and the decoder initializer input
// is the shared phi_init applied to h_1.

#include <span>
#include <string>
#include <vector>

#include "mwnmt/layers.hpp"

namespace mwnmt {

// Padded id matrix for one side of a batch.
struct TokenMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> ids;  // rows x cols, row-major
  std::vector<int> lengths;

  static TokenMatrix single(std::span<const int> tokens);
  int at(int row, int col) const { return ids[static_cast<std::size_t>(row) * cols + col]; }
  std::vector<int> column(int col) const;
};

struct EncoderParams {
  std::string language;
  Tensor embed;  // [|V_x|, word_dim]
  GruParams forward;
  GruParams backward;
  Affine adapt;  // [2 * hidden, d]

  static EncoderParams make(ParamInit& init, std::string language, int vocab, int word_dim, int hidden,
                            int context_dim);
  int vocab_size() const { return embed.dim(0); }
  int word_dim() const { return embed.dim(1); }
  int hidden_dim() const { return forward.hidden_dim(); }
  int context_dim() const { return adapt.out_dim(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct BidirectionalStates {
  std::vector<Tensor> forward;   // per position, [B, hidden]
  std::vector<Tensor> backward;  // per position, [B, hidden]
};

struct ContextSet {
  Tensor contexts;      // [B, T, d]
  Tensor att_contexts;  // [B, T, d_att], tanh of contexts
  Tensor init_vector;   // [B, d], shared phi_init of the first context
  std::vector<int> lengths;

  int rows() const { return contexts.dim(0); }
  int steps() const { return contexts.dim(1); }
};

// Validates ids against the encoder vocabulary; throws InputError/IndexError.
void check_source(const EncoderParams& enc, const TokenMatrix& source);

BidirectionalStates run_bidirectional(const EncoderParams& enc, const TokenMatrix& source);

// The shared initializer network phi_init.
Tensor phi_init(const FeedForward& shared_init, const Tensor& first_context);

ContextSet encode(const EncoderParams& enc, const FeedForward& shared_init, const TokenMatrix& source);
ContextSet encode(const EncoderParams& enc, const FeedForward& shared_init, std::span<const int> tokens);

}  // namespace mwnmt
