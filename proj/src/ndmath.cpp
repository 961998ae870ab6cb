#include "mwnmt/ndmath.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "mwnmt/errors.hpp"

namespace mwnmt {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_rank(const std::string& op, const Tensor& t, int rank) {
  if (!t.defined()) throw ContractError(op + ": undefined tensor");
  if (t.rank() != rank) {
    throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

// Builds the output node. Inputs and the backward rule are only recorded when
// gradient mode is on and some input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// Grad buffer of input i, or nullptr when that input takes no gradient.
double* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer() : nullptr;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_acc(int m, int k, int n, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      axpy(n, av, b + static_cast<std::size_t>(p) * n, crow);
    }
  }
}

// Accumulates the matmul gradients da += dc * b^T and db += a^T * dc.
void gemm_backward(int m, int k, int n, const double* a, const double* b, const double* dc,
                   double* da, double* db) {
  if (da) {
    std::vector<double> bt(static_cast<std::size_t>(n) * k);
    for (int p = 0; p < k; ++p) {
      for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(j) * k + p] = b[static_cast<std::size_t>(p) * n + j];
    }
    gemm_acc(m, n, k, dc, bt.data(), da);
  }
  if (db) {
    for (int i = 0; i < m; ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * k;
      const double* dcrow = dc + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        axpy(n, av, dcrow, db + static_cast<std::size_t>(p) * n);
      }
    }
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

double* detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad.data();
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape() on undefined tensor");
  return node_->shape;
}

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(int i) const { return node_->value.at(static_cast<std::size_t>(i)); }

double Tensor::at(int i, int j) const {
  require_rank("at", *this, 2);
  return node_->value.at(static_cast<std::size_t>(i) * node_->shape[1] + j);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::grad_mut() {
  node_->grad_buffer();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

// ---- record & backward -----------------------------------------------------

ComputationRecord::ComputationRecord(const Tensor& root) {
  if (!root.requires_grad()) return;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS; inputs are pushed before their consumers.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  ComputationRecord record(loss);
  Node* root = loss.node().get();
  root->grad_buffer()[0] += 1.0;
  const auto& order = record.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf() || node->grad.empty()) continue;
    node->backward_fn(*node);
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

// ---- ops -------------------------------------------------------------------

namespace nd {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) dim_error("matmul", a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  gemm_acc(m, k, n, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    gemm_backward(m, k, n, self.inputs[0]->value.data(), self.inputs[1]->value.data(), self.grad.data(),
                  input_grad(self, 0), input_grad(self, 1));
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("affine", x, 2);
  require_rank("affine", w, 2);
  require_rank("affine", bias, 1);
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) dim_error("affine", x.shape(), w.shape());
  if (bias.dim(0) != n) dim_error("affine bias", w.shape(), bias.shape());
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  const double* bv = bias.data().data();
  for (int i = 0; i < m; ++i) std::copy(bv, bv + n, out.begin() + static_cast<std::ptrdiff_t>(i) * n);
  gemm_acc(m, k, n, x.data().data(), w.data().data(), out.data());
  return make_result({m, n}, std::move(out), {x.node(), w.node(), bias.node()}, [m, k, n](Node& self) {
    gemm_backward(m, k, n, self.inputs[0]->value.data(), self.inputs[1]->value.data(), self.grad.data(),
                  input_grad(self, 0), input_grad(self, 1));
    if (double* db = input_grad(self, 2)) {
      for (int i = 0; i < m; ++i) axpy(n, 1.0, self.grad.data() + static_cast<std::size_t>(i) * n, db);
    }
  });
}

namespace {

template <typename Fwd>
Tensor binary_elem(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                   std::function<void(Node&)> bwd) {
  if (!a.defined() || !b.defined()) throw ContractError(std::string(name) + ": undefined tensor");
  if (a.shape() != b.shape()) dim_error(name, a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, std::move(bwd));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elem("add", a, b, [](double x, double y) { return x + y; }, [](Node& self) {
    const std::size_t n = self.grad.size();
    if (double* g = input_grad(self, 0)) axpy(n, 1.0, self.grad.data(), g);
    if (double* g = input_grad(self, 1)) axpy(n, 1.0, self.grad.data(), g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elem("sub", a, b, [](double x, double y) { return x - y; }, [](Node& self) {
    const std::size_t n = self.grad.size();
    if (double* g = input_grad(self, 0)) axpy(n, 1.0, self.grad.data(), g);
    if (double* g = input_grad(self, 1)) axpy(n, -1.0, self.grad.data(), g);
  });
}

Tensor mul_elem(const Tensor& a, const Tensor& b) {
  return binary_elem("mul_elem", a, b, [](double x, double y) { return x * y; }, [](Node& self) {
    const std::size_t n = self.grad.size();
    const double* av = self.inputs[0]->value.data();
    const double* bv = self.inputs[1]->value.data();
    if (double* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  require_rank("add_bias", bias, 1);
  const int m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) dim_error("add_bias", x.shape(), bias.shape());
  std::vector<double> out(x.data().begin(), x.data().end());
  for (int i = 0; i < m; ++i) axpy(n, 1.0, bias.data().data(), out.data() + static_cast<std::size_t>(i) * n);
  return make_result(x.shape(), std::move(out), {x.node(), bias.node()}, [m, n](Node& self) {
    if (double* g = input_grad(self, 0)) axpy(self.grad.size(), 1.0, self.grad.data(), g);
    if (double* g = input_grad(self, 1)) {
      for (int i = 0; i < m; ++i) axpy(n, 1.0, self.grad.data() + static_cast<std::size_t>(i) * n, g);
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x.node()}, [factor](Node& self) {
    if (double* g = input_grad(self, 0)) axpy(self.grad.size(), factor, self.grad.data(), g);
  });
}

Tensor tanh_elem(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return make_result(x.shape(), std::move(out), {x.node()}, [](Node& self) {
    if (double* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.value[i];
        g[i] += self.grad[i] * (1.0 - y * y);
      }
    }
  });
}

Tensor sigmoid_elem(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return make_result(x.shape(), std::move(out), {x.node()}, [](Node& self) {
    if (double* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.value[i];
        g[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, {x.node()}, [](Node& self) {
    if (double* g = input_grad(self, 0)) {
      const double up = self.grad[0];
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += up;
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int rank = parts[0].rank();
  if (rank != 1 && rank != 2) throw DimensionError("concat: rank must be 1 or 2, got " + shape_str(parts[0].shape()));
  const int rows = rank == 1 ? 1 : parts[0].dim(0);
  std::vector<int> widths;
  int total = 0;
  std::vector<NodePtr> inputs;
  for (const Tensor& p : parts) {
    if (p.rank() != rank || (rank == 2 && p.dim(0) != rows)) dim_error("concat", parts[0].shape(), p.shape());
    widths.push_back(p.dim(rank - 1));
    total += widths.back();
    inputs.push_back(p.node());
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * total);
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].data().data();
    for (int r = 0; r < rows; ++r) {
      std::copy(src + static_cast<std::size_t>(r) * widths[k], src + static_cast<std::size_t>(r + 1) * widths[k],
                out.begin() + static_cast<std::ptrdiff_t>(r) * total + offset);
    }
    offset += widths[k];
  }
  Shape shape = rank == 1 ? Shape{total} : Shape{rows, total};
  return make_result(std::move(shape), std::move(out), std::move(inputs), [rows, total, widths](Node& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* g = input_grad(self, k)) {
        for (int r = 0; r < rows; ++r) {
          axpy(widths[k], 1.0, self.grad.data() + static_cast<std::size_t>(r) * total + off,
               g + static_cast<std::size_t>(r) * widths[k]);
        }
      }
      off += widths[k];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) dim_error("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x.node()}, [](Node& self) {
    if (double* g = input_grad(self, 0)) axpy(self.grad.size(), 1.0, self.grad.data(), g);
  });
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw ContractError("stack_steps: no inputs");
  require_rank("stack_steps", steps[0], 2);
  const int b = steps[0].dim(0), d = steps[0].dim(1);
  const int t = static_cast<int>(steps.size());
  std::vector<NodePtr> inputs;
  std::vector<double> out(static_cast<std::size_t>(b) * t * d);
  for (int s = 0; s < t; ++s) {
    if (steps[s].shape() != steps[0].shape()) dim_error("stack_steps", steps[0].shape(), steps[s].shape());
    inputs.push_back(steps[s].node());
    const double* src = steps[s].data().data();
    for (int r = 0; r < b; ++r) {
      std::copy(src + static_cast<std::size_t>(r) * d, src + static_cast<std::size_t>(r + 1) * d,
                out.begin() + (static_cast<std::ptrdiff_t>(r) * t + s) * d);
    }
  }
  return make_result({b, t, d}, std::move(out), std::move(inputs), [b, t, d](Node& self) {
    for (int s = 0; s < t; ++s) {
      if (double* g = input_grad(self, s)) {
        for (int r = 0; r < b; ++r) {
          axpy(d, 1.0, self.grad.data() + (static_cast<std::size_t>(r) * t + s) * d, g + static_cast<std::size_t>(r) * d);
        }
      }
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_rank("embedding_lookup", table, 2);
  const int vocab = table.dim(0), d = table.dim(1);
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ContractError("embedding_lookup: empty id list");
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  const double* tv = table.data().data();
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy(tv + static_cast<std::size_t>(ids[i]) * d, tv + static_cast<std::size_t>(ids[i] + 1) * d,
              out.begin() + static_cast<std::ptrdiff_t>(i) * d);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result({n, d}, std::move(out), {table.node()}, [idx = std::move(idx), d](Node& self) {
    if (double* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        axpy(d, 1.0, self.grad.data() + i * d, g + static_cast<std::size_t>(idx[i]) * d);
      }
    }
  });
}

Tensor where_rows(std::span<const std::uint8_t> keep, const Tensor& a, const Tensor& b) {
  require_rank("where_rows", a, 2);
  if (a.shape() != b.shape()) dim_error("where_rows", a.shape(), b.shape());
  const int rows = a.dim(0), d = a.dim(1);
  if (static_cast<int>(keep.size()) != rows) {
    throw DimensionError("where_rows: mask length " + std::to_string(keep.size()) + " vs rows " + std::to_string(rows));
  }
  std::vector<double> out(a.size());
  for (int r = 0; r < rows; ++r) {
    const double* src = (keep[r] ? a : b).data().data() + static_cast<std::size_t>(r) * d;
    std::copy(src, src + d, out.begin() + static_cast<std::ptrdiff_t>(r) * d);
  }
  std::vector<std::uint8_t> mask(keep.begin(), keep.end());
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [mask = std::move(mask), d](Node& self) {
    double* ga = input_grad(self, 0);
    double* gb = input_grad(self, 1);
    for (std::size_t r = 0; r < mask.size(); ++r) {
      double* g = mask[r] ? ga : gb;
      if (g) axpy(d, 1.0, self.grad.data() + r * d, g + r * d);
    }
  });
}

namespace {

// Softmax of n values in place into out; returns nothing, assumes n >= 1.
void softmax_into(const double* x, int n, double* out) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
}

void softmax_backward(const double* y, const double* gy, int n, double* gx) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += gy[i] * y[i];
  for (int i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - dot);
}

}  // namespace

Tensor softmax(const Tensor& x) {
  if (!x.defined()) throw DomainError("softmax: empty input");
  require_rank("softmax", x, 1);
  const int n = x.dim(0);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(x.data()[i])) throw DomainError("softmax: non-finite entry at position " + std::to_string(i));
  }
  std::vector<double> out(n);
  softmax_into(x.data().data(), n, out.data());
  return make_result({n}, std::move(out), {x.node()}, [n](Node& self) {
    if (double* g = input_grad(self, 0)) softmax_backward(self.value.data(), self.grad.data(), n, g);
  });
}

Tensor masked_softmax(const Tensor& scores, std::span<const int> lengths) {
  require_rank("masked_softmax", scores, 2);
  const int b = scores.dim(0), t = scores.dim(1);
  if (static_cast<int>(lengths.size()) != b) {
    throw DimensionError("masked_softmax: " + std::to_string(lengths.size()) + " lengths for " + std::to_string(b) + " rows");
  }
  std::vector<int> lens(lengths.begin(), lengths.end());
  for (int len : lens) {
    if (len < 1 || len > t) throw DomainError("masked_softmax: length " + std::to_string(len) + " outside [1," + std::to_string(t) + "]");
  }
  std::vector<double> out(scores.size(), 0.0);
  for (int r = 0; r < b; ++r) {
    softmax_into(scores.data().data() + static_cast<std::size_t>(r) * t, lens[r], out.data() + static_cast<std::size_t>(r) * t);
  }
  return make_result({b, t}, std::move(out), {scores.node()}, [lens = std::move(lens), t](Node& self) {
    if (double* g = input_grad(self, 0)) {
      for (std::size_t r = 0; r < lens.size(); ++r) {
        softmax_backward(self.value.data() + r * t, self.grad.data() + r * t, lens[r], g + r * t);
      }
    }
  });
}

Tensor cross_entropy_from_logits(const Tensor& logits, int target) {
  require_rank("cross_entropy_from_logits", logits, 1);
  const int v = logits.dim(0);
  Tensor as_row = reshape(logits, {1, v});
  const int targets[1] = {target};
  const double weights[1] = {1.0};
  return reshape(cross_entropy_from_logits(as_row, targets, weights), {});
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> targets, std::span<const double> weights) {
  require_rank("cross_entropy_from_logits", logits, 2);
  const int b = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != b || static_cast<int>(weights.size()) != b) {
    throw DimensionError("cross_entropy_from_logits: " + std::to_string(b) + " rows but " + std::to_string(targets.size()) +
                         " targets and " + std::to_string(weights.size()) + " weights");
  }
  std::vector<double> out(b);
  std::vector<double> probs(static_cast<std::size_t>(b) * v);
  const double* x = logits.data().data();
  for (int r = 0; r < b; ++r) {
    if (targets[r] < 0 || targets[r] >= v) {
      throw IndexError("cross_entropy_from_logits: target " + std::to_string(targets[r]) + " at row " + std::to_string(r) +
                       " outside [0," + std::to_string(v) + ")");
    }
    const double* row = x + static_cast<std::size_t>(r) * v;
    double mx = row[0];
    for (int k = 1; k < v; ++k) mx = std::max(mx, row[k]);
    double z = 0.0;
    double* p = probs.data() + static_cast<std::size_t>(r) * v;
    for (int k = 0; k < v; ++k) {
      p[k] = std::exp(row[k] - mx);
      z += p[k];
    }
    for (int k = 0; k < v; ++k) p[k] /= z;
    out[r] = weights[r] == 0.0 ? 0.0 : weights[r] * (mx + std::log(z) - row[targets[r]]);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return make_result({b}, std::move(out), {logits.node()},
                     [probs = std::move(probs), tg = std::move(tg), w = std::move(w), v](Node& self) {
                       double* g = input_grad(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < tg.size(); ++r) {
                         const double scale_r = self.grad[r] * w[r];
                         if (scale_r == 0.0) continue;
                         double* gr = g + r * v;
                         axpy(v, scale_r, probs.data() + r * v, gr);
                         gr[tg[r]] -= scale_r;
                       }
                     });
}

Tensor additive_scores(const Tensor& keys, const Tensor& query, const Tensor& v) {
  require_rank("additive_scores", keys, 3);
  require_rank("additive_scores", query, 2);
  require_rank("additive_scores", v, 1);
  const int b = keys.dim(0), t = keys.dim(1), s = keys.dim(2);
  if (query.dim(0) != b || query.dim(1) != s) dim_error("additive_scores", keys.shape(), query.shape());
  if (v.dim(0) != s) dim_error("additive_scores", keys.shape(), v.shape());
  std::vector<double> hidden(keys.size());
  std::vector<double> out(static_cast<std::size_t>(b) * t);
  const double* kv = keys.data().data();
  const double* qv = query.data().data();
  const double* vv = v.data().data();
  for (int r = 0; r < b; ++r) {
    for (int i = 0; i < t; ++i) {
      const std::size_t base = (static_cast<std::size_t>(r) * t + i) * s;
      double e = 0.0;
      for (int k = 0; k < s; ++k) {
        const double h = std::tanh(kv[base + k] + qv[static_cast<std::size_t>(r) * s + k]);
        hidden[base + k] = h;
        e += vv[k] * h;
      }
      out[static_cast<std::size_t>(r) * t + i] = e;
    }
  }
  return make_result({b, t}, std::move(out), {keys.node(), query.node(), v.node()},
                     [hidden = std::move(hidden), b, t, s](Node& self) {
                       double* gk = input_grad(self, 0);
                       double* gq = input_grad(self, 1);
                       double* gv = input_grad(self, 2);
                       const double* vv = self.inputs[2]->value.data();
                       std::vector<double> pre(s);
                       for (int r = 0; r < b; ++r) {
                         for (int i = 0; i < t; ++i) {
                           const double up = self.grad[static_cast<std::size_t>(r) * t + i];
                           if (up == 0.0) continue;
                           const std::size_t base = (static_cast<std::size_t>(r) * t + i) * s;
                           for (int k = 0; k < s; ++k) {
                             const double h = hidden[base + k];
                             pre[k] = up * vv[k] * (1.0 - h * h);
                           }
                           if (gk) axpy(s, 1.0, pre.data(), gk + base);
                           if (gq) axpy(s, 1.0, pre.data(), gq + static_cast<std::size_t>(r) * s);
                           if (gv) axpy(s, up, hidden.data() + base, gv);
                         }
                       }
                     });
}

Tensor weighted_sum(const Tensor& alpha, const Tensor& values) {
  require_rank("weighted_sum", alpha, 2);
  require_rank("weighted_sum", values, 3);
  const int b = values.dim(0), t = values.dim(1), d = values.dim(2);
  if (alpha.dim(0) != b || alpha.dim(1) != t) dim_error("weighted_sum", alpha.shape(), values.shape());
  std::vector<double> out(static_cast<std::size_t>(b) * d, 0.0);
  const double* av = alpha.data().data();
  const double* vv = values.data().data();
  for (int r = 0; r < b; ++r) {
    for (int i = 0; i < t; ++i) {
      axpy(d, av[static_cast<std::size_t>(r) * t + i], vv + (static_cast<std::size_t>(r) * t + i) * d,
           out.data() + static_cast<std::size_t>(r) * d);
    }
  }
  return make_result({b, d}, std::move(out), {alpha.node(), values.node()}, [b, t, d](Node& self) {
    double* ga = input_grad(self, 0);
    double* gv = input_grad(self, 1);
    const double* av = self.inputs[0]->value.data();
    const double* vv = self.inputs[1]->value.data();
    for (int r = 0; r < b; ++r) {
      const double* up = self.grad.data() + static_cast<std::size_t>(r) * d;
      for (int i = 0; i < t; ++i) {
        const std::size_t base = (static_cast<std::size_t>(r) * t + i) * d;
        if (ga) {
          double dot = 0.0;
          for (int k = 0; k < d; ++k) dot += up[k] * vv[base + k];
          ga[static_cast<std::size_t>(r) * t + i] += dot;
        }
        if (gv) axpy(d, av[static_cast<std::size_t>(r) * t + i], up, gv + base);
      }
    }
  });
}

}  // namespace nd
}  // namespace mwnmt
