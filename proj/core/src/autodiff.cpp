#include "lassode/autodiff.hpp"

#include <unordered_set>

namespace lassode::ad {

Tensor& Node::ensure_grad() {
  if (grad.empty() || !grad.same_shape(value)) {
    grad = Tensor(value.shape(), std::vector<double>(value.size(), 0.0));
  }
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw ShapeError(std::string("item(): expected a scalar, got ") +
                     node_->value.shape_string());
  }
  return node_->value[0];
}

Var make_op(const char* op, Tensor value, std::vector<Var> inputs,
            std::function<void(Node& self)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  node->requires_grad = any;
  if (any) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void accumulate(Node& node, const Tensor& delta) {
  if (!node.requires_grad) return;
  Tensor& g = node.ensure_grad();
  if (!g.same_shape(delta)) {
    throw ShapeError(std::string("gradient shape mismatch in ") + node.op + ": " +
                     g.shape_string() + " vs " + delta.shape_string());
  }
  double* gd = g.data();
  const double* dd = delta.data();
  for (std::size_t i = 0; i < g.size(); ++i) gd[i] += dd[i];
}

void backward(const Var& root) {
  if (!root.requires_grad()) return;
  if (root.value().size() != 1) {
    throw ShapeError("backward(): root must be a scalar, got " + root.value().shape_string());
  }

  // Iterative post-order DFS; graphs from long recurrences are deep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& r = *root.node();
  r.ensure_grad();
  r.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior gradients are transient; keep only leaf gradients.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

}  // namespace lassode::ad
