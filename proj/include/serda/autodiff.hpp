#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "serda/tensor.hpp"

// Reverse-mode automatic differentiation over dense double tensors.
//
// A computation is recorded as a DAG of Nodes while ops execute. Leaves are
// created with Var::leaf (trainable) or Var::constant. backward() walks the
// DAG from a scalar root in reverse topological order and returns the
// gradient of every reachable trainable leaf. Dropping the last Var that
// references a graph frees it.
namespace serda::ad {

struct Node;

// Adds the contribution of `grad_out` into each parent accumulator. An
// accumulator is null when that parent does not need a gradient. `self` gives
// access to the op's output value and its parents' values.
using BackwardRule =
    std::function<void(const Node& self, const Tensor& grad_out, std::span<Tensor* const> parent_grads)>;

struct Node {
  Tensor value;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardRule rule;
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  double item() const { return node_->value.item(); }

  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  // Records a derived node. The result requires grad iff any parent does.
  static Var make(Tensor value, std::vector<Var> parents, BackwardRule rule);

 private:
  Var(Tensor value, bool requires_grad);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  std::shared_ptr<Node> node_;
};

// Gradients of trainable leaves, keyed by node identity.
class Gradients {
 public:
  const Tensor* find(const Var& v) const;
  const Tensor& at(const Var& v) const;
  bool contains(const Var& v) const { return find(v) != nullptr; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Var& root);
  std::unordered_map<const Node*, Tensor> grads_;
};

// Root must hold exactly one element.
Gradients backward(const Var& root);

// ---- ops ------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);       // [m x k] * [k x n]
Var transpose(const Var& a);                   // 2-D
Var add(const Var& a, const Var& b);           // same shape
Var sub(const Var& a, const Var& b);           // same shape
Var mul(const Var& a, const Var& b);           // elementwise, same shape
Var scale(const Var& a, double factor);
Var add_row_bias(const Var& x, const Var& bias);  // [m x n] + [n] broadcast over rows

Var relu(const Var& x);
Var gelu(const Var& x);  // exact erf form
Var exp(const Var& x);
Var log(const Var& x);   // throws DomainError on x <= 0
// log(max(x, eps)); gradient is zero where the clamp is active.
Var log_clamped(const Var& x, double eps);

Var sum(const Var& x);                    // all elements -> scalar
Var sum(const Var& x, std::size_t axis);  // 2-D reduce; removes the axis
Var mean(const Var& x);
Var mean(const Var& x, std::size_t axis);

// Along the last axis, max-subtracted.
Var softmax(const Var& x);
Var log_softmax(const Var& x);
// Rows (last axis) scaled to unit L2 norm; zero rows raise DomainError naming the row.
Var l2_normalize(const Var& x);

Var reshape(const Var& x, Shape shape);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);  // 2-D
Var concat_cols(std::span<const Var> parts);                       // 2-D, equal rows
Var stack_rows(std::span<const Var> rows);  // each [n] or [1 x n] -> [N x n]
Var concat_rows(std::span<const Var> parts);  // 2-D, equal cols
// out[i] = x[i, index[i]] for x [N x C].
Var pick(const Var& x, std::span<const int> index);

// Per-row normalisation over the last axis with affine gain and bias [n].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Frame extraction for strided 1-D convolution: x [T x C] -> [T_out x kernel*C]
// with T_out = (T - kernel) / stride + 1.
Var frames(const Var& x, std::size_t kernel, std::size_t stride);
// sum_k weights[k] * states[k]; weights is [K], all states share one shape.
Var mix(std::span<const Var> states, const Var& weights);

}  // namespace serda::ad
