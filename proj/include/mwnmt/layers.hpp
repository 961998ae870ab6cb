#pragma once

// Parameterized building blocks shared by encoders and decoders.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mwnmt/ndmath.hpp"

namespace mwnmt {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Weights uniform in [-scale, scale], biases zero.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed, double scale = 0.08) : rng_(seed), scale_(scale) {}
  Tensor weight(Shape shape);
  Tensor bias(int size);

 private:
  std::mt19937_64 rng_;
  double scale_;
};

struct Affine {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static Affine make(ParamInit& init, int in, int out);
  Tensor operator()(const Tensor& x) const { return nd::affine(x, w, b); }
  int in_dim() const { return w.dim(0); }
  int out_dim() const { return w.dim(1); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Feedforward network with a single tanh hidden layer and a linear output.
struct FeedForward {
  Affine hidden;
  Affine output;

  static FeedForward make(ParamInit& init, int in, int hidden, int out);
  Tensor operator()(const Tensor& x) const { return output(nd::tanh_elem(hidden(x))); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Gated recurrent unit:
//   r  = sigmoid(x W_r + s U_r + b_r)
//   u  = sigmoid(x W_u + s U_u + b_u)
//   s~ = tanh(x W_c + (r * s) U_c + b_c)
//   s' = (1 - u) * s + u * s~
struct GruParams {
  Tensor w_r, w_u, w_c;  // [in, hidden]
  Tensor u_r, u_u, u_c;  // [hidden, hidden]
  Tensor b_r, b_u, b_c;  // [hidden]

  static GruParams make(ParamInit& init, int in, int hidden);
  int in_dim() const { return w_r.dim(0); }
  int hidden_dim() const { return u_r.dim(0); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// state [B, hidden], input [B, in] -> new state [B, hidden]
Tensor gru_step(const Tensor& state, const Tensor& input, const GruParams& p);

}  // namespace mwnmt
