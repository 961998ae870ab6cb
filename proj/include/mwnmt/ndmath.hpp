#pragma once

// Dense double-precision arrays with a reverse-mode differentiation record.
//
// Every op checks shapes explicitly. The only implicit broadcast is adding a
// bias vector to each row of a matrix (add_bias / affine). Gradients
// accumulate additively into leaf tensors; callers reset them between
// minibatches with zero_grad().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mwnmt {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;  // empty for leaves

  bool is_leaf() const { return !backward_fn; }
  double* grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Direct write access, meant for optimizers and initializers on leaves.
  std::span<double> data_mut();
  double item() const;
  double at(int i) const;
  double at(int i, int j) const;

  bool requires_grad() const;
  bool has_grad() const;
  // Empty span when nothing has been accumulated.
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  // Identity of the underlying storage, not value equality.
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Topologically ordered view of everything reachable from a root that
// carries gradient. Every node's inputs precede it.
class ComputationRecord {
 public:
  explicit ComputationRecord(const Tensor& root);
  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& order() const { return order_; }

 private:
  std::vector<detail::Node*> order_;
};

// Fills d(loss)/d(t) into every requires_grad leaf reachable from loss.
// Intermediate gradients are released once propagated.
void backward(const Tensor& loss);

namespace nd {

Tensor matmul(const Tensor& a, const Tensor& b);
// x[m,k] * w[k,n] + bias[n] broadcast over rows.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_elem(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor tanh_elem(const Tensor& x);
Tensor sigmoid_elem(const Tensor& x);
Tensor sum(const Tensor& x);

// Concatenation along the last axis; rank-1 or rank-2 inputs with equal row counts.
Tensor concat(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);
// Stacks T tensors of shape [B,D] into [B,T,D].
Tensor stack_steps(const std::vector<Tensor>& steps);

// Rows of `table` selected by ids: [V,D] -> [len(ids), D].
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
// Row b taken from `a` where keep[b] != 0, else from `b`.
Tensor where_rows(std::span<const std::uint8_t> keep, const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x);
// Row-wise softmax over the first lengths[b] columns; the rest are exactly 0.
Tensor masked_softmax(const Tensor& scores, std::span<const int> lengths);

// Rank-1 logits and one target: scalar -log softmax(x)[target].
Tensor cross_entropy_from_logits(const Tensor& logits, int target);
// Rank-2 logits [B,V]: per-row weight[b] * -log softmax(x_b)[targets[b]] as [B].
Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets,
                                 std::span<const double> weights);

// e[b,t] = sum_s v[s] * tanh(keys[b,t,s] + query[b,s]).
Tensor additive_scores(const Tensor& keys, const Tensor& query, const Tensor& v);
// out[b,:] = sum_t alpha[b,t] * values[b,t,:].
Tensor weighted_sum(const Tensor& alpha, const Tensor& values);

}  // namespace nd
}  // namespace mwnmt
