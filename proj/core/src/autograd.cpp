#include "promptmr/autograd.hpp"

#include <unordered_set>

namespace promptmr::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var Var::constant(RealArray a) {
  auto n = std::make_shared<Node>();
  n->shape = a.shape();
  n->value = std::move(a.vec());
  return Var(std::move(n));
}

Var Var::constant(Shape shape, std::vector<double> values) { return constant(RealArray(std::move(shape), std::move(values))); }

Var Var::parameter(RealArray a) {
  Var v = constant(std::move(a));
  v.node_->requires_grad = true;
  return v;
}

double Var::item() const {
  if (node_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(node_->shape));
  return node_->value[0];
}

Var make_result(Shape shape, std::vector<double> value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  if (shape_size(shape) != value.size()) throw ShapeError("op result size mismatch for " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(bw);
    }
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.size() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Release interior gradients; leaves keep theirs for the optimiser.
  for (Node* n : order)
    if (n->backward_fn) n->grad.clear();
}

}  // namespace promptmr::ag
