#include "mwnmt/layers.hpp"

#include "mwnmt/errors.hpp"

namespace mwnmt {

Tensor ParamInit::weight(Shape shape) {
  std::uniform_real_distribution<double> dist(-scale_, scale_);
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = dist(rng_);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor ParamInit::bias(int size) { return Tensor::zeros({size}, true); }

Affine Affine::make(ParamInit& init, int in, int out) { return {init.weight({in, out}), init.bias(out)}; }

void Affine::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".W", w});
  out.push_back({prefix + ".b", b});
}

FeedForward FeedForward::make(ParamInit& init, int in, int hidden, int out) {
  Affine h = Affine::make(init, in, hidden);
  Affine o = Affine::make(init, hidden, out);
  return {std::move(h), std::move(o)};
}

void FeedForward::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

GruParams GruParams::make(ParamInit& init, int in, int hidden) {
  GruParams p;
  p.w_r = init.weight({in, hidden});
  p.w_u = init.weight({in, hidden});
  p.w_c = init.weight({in, hidden});
  p.u_r = init.weight({hidden, hidden});
  p.u_u = init.weight({hidden, hidden});
  p.u_c = init.weight({hidden, hidden});
  p.b_r = init.bias(hidden);
  p.b_u = init.bias(hidden);
  p.b_c = init.bias(hidden);
  return p;
}

void GruParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".W_r", w_r});
  out.push_back({prefix + ".W_u", w_u});
  out.push_back({prefix + ".W_c", w_c});
  out.push_back({prefix + ".U_r", u_r});
  out.push_back({prefix + ".U_u", u_u});
  out.push_back({prefix + ".U_c", u_c});
  out.push_back({prefix + ".b_r", b_r});
  out.push_back({prefix + ".b_u", b_u});
  out.push_back({prefix + ".b_c", b_c});
}

Tensor gru_step(const Tensor& state, const Tensor& input, const GruParams& p) {
  if (state.rank() != 2 || input.rank() != 2 || state.dim(0) != input.dim(0)) {
    throw DimensionError("gru_step: state " + shape_str(state.shape()) + " and input " + shape_str(input.shape()) +
                         " must be [B,hidden] and [B,in]");
  }
  if (state.dim(1) != p.hidden_dim() || input.dim(1) != p.in_dim()) {
    throw DimensionError("gru_step: expected hidden " + std::to_string(p.hidden_dim()) + " and input " +
                         std::to_string(p.in_dim()) + ", got " + shape_str(state.shape()) + " and " +
                         shape_str(input.shape()));
  }
  using namespace nd;
  const Tensor reset = sigmoid_elem(add(affine(input, p.w_r, p.b_r), matmul(state, p.u_r)));
  const Tensor update = sigmoid_elem(add(affine(input, p.w_u, p.b_u), matmul(state, p.u_u)));
  const Tensor candidate = tanh_elem(add(affine(input, p.w_c, p.b_c), matmul(mul_elem(reset, state), p.u_c)));
  return add(state, mul_elem(update, sub(candidate, state)));
}

}  // namespace mwnmt
