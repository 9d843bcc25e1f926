#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dcnav/rng.hpp"
#include "dcnav/tensor.hpp"

namespace dcnav::ag {

// One node of a define-by-run computation graph. Built-up graphs are
// acyclic by construction (ops only reference already-existing nodes).
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;  // reads this->grad, adds into inputs
  bool requires_grad = false;
  const char* op = "leaf";
};

// Value handle over a graph node. Cheap to copy; sharing a handle shares the
// node, so a Variable may feed any number of downstream ops.
class Variable {
 public:
  Variable() = default;
  explicit Variable(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Variable leaf(Tensor value, bool requires_grad);
  static Variable constant(Tensor value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  // Leaf-only mutation hooks for the optimizer.
  Tensor& mutable_value() { return node_->value; }
  Tensor& mutable_grad() { return node_->grad; }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// --- elementwise ---
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double c);
Variable tanh_op(const Variable& a);
Variable relu(const Variable& a);
Variable sigmoid(const Variable& a);

// --- linear algebra ---
Variable matmul(const Variable& a, const Variable& b);      // [m,k]x[k,n]
Variable transpose(const Variable& a);                      // [m,n]->[n,m]
Variable matvec(const Variable& w, const Variable& x);      // [m,k]x[k]->[m]
Variable matvec_t(const Variable& m, const Variable& v);    // M^T v: [n,d],[n]->[d]
// Row-wise affine map: X[N,d], W[o,d], b[o] -> X W^T + b per row, [N,o].
Variable linear_rows(const Variable& x, const Variable& w, const Variable& b);
// Scaled pairwise row dot products: A[m,k], B[n,k] -> [m,n] with
// out[i][j] = s * <A_i, B_j>. Independent code path from transpose+matmul.
Variable row_dot_products(const Variable& a, const Variable& b, double s);

// --- shape ---
Variable concat(const std::vector<Variable>& parts);        // rank-1 concat
Variable concat_cols(const Variable& a, const Variable& b); // [N,p],[N,q]->[N,p+q]
Variable slice(const Variable& x, size_t start, size_t len);
Variable row(const Variable& x, size_t i);                  // [N,d]->[d]
Variable stack_rows(const std::vector<Variable>& rows);     // N x [d] -> [N,d]
Variable reshape(const Variable& x, std::vector<size_t> shape);

// --- reductions / distributions ---
Variable sum(const Variable& x);                            // -> scalar [1]
Variable softmax(const Variable& x);                        // rank-1, stable
Variable l2_normalize(const Variable& x);                   // rank-1
Variable l2_normalize_rows(const Variable& x);              // per-row, rank-2
// -log(p[y]) with p[y] clamped below at kLogEps.
Variable cross_entropy(const Variable& p, size_t y);

// Inverted dropout: keeps with probability 1-p and rescales by 1/(1-p), so
// evaluation needs no correction. Mask is drawn from rng at call time.
Variable dropout(const Variable& x, double p, RngStream& rng);

// Standard LSTM cell built from the primitives above. Weight layout:
// w_ih [4H, in], w_hh [4H, H], b [4H] with gate order (input, forget,
// candidate, output).
std::pair<Variable, Variable> lstm_cell(const Variable& x, const Variable& h_prev,
                                        const Variable& c_prev, const Variable& w_ih,
                                        const Variable& w_hh, const Variable& b);

// Reverse-mode sweep from a scalar root. Zeroes the grads of every node
// reachable from root, then accumulates dRoot/dNode into each of them;
// every reachable node is visited exactly once.
void backward(const Variable& root);

// Like backward, but leaves already-defined grads in place and adds to them
// (undefined grads are zero-initialized first). Lets a caller sum gradients
// over several graphs that share leaves, freeing each graph before building
// the next.
void backward_accumulate(const Variable& root);

inline constexpr double kNormEps = 1e-12;
inline constexpr double kLogEps = 1e-12;

}  // namespace dcnav::ag
