#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lassode/tensor.hpp"

namespace lassode::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamic computation graph. The backward closure reads
/// `self.grad` and accumulates into the gradients of `self.inputs`.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node& self)> backward;

  Tensor& ensure_grad();
};

/// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;
  const char* op() const { return node_->op; }

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Creates the result node of an op. The backward closure is dropped when no
/// input requires a gradient, so graphs built from constants cost nothing.
Var make_op(const char* op, Tensor value, std::vector<Var> inputs,
            std::function<void(Node& self)> backward);

/// Reverse sweep from a scalar root. Gradients accumulate into leaves, so
/// callers zero them between independent passes.
void backward(const Var& root);

/// Adds `delta` into the gradient slot of `node` if it participates.
void accumulate(Node& node, const Tensor& delta);

}  // namespace lassode::ad
