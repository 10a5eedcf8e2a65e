#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "promptmr/ndarray.hpp"

// Minimal reverse-mode automatic differentiation over dense double tensors.
// A Var is a shared handle to a graph node; ops record a backward closure only
// when some input requires a gradient and grad mode is enabled.

namespace promptmr::ag {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var constant(RealArray a);
  static Var constant(Shape shape, std::vector<double> values);
  static Var parameter(RealArray a);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> value() const { return node_->value; }
  /// Mutable access for leaves (parameters, optimiser updates).
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  RealArray array() const { return RealArray(node_->shape, node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Backpropagate from a scalar root (seed gradient 1).
void backward(const Var& root);

/// True when new ops record their backward closures.
bool grad_enabled();

/// RAII switch that disables graph recording (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Build an op result. `bw` is kept only if some parent requires grad.
Var make_result(Shape shape, std::vector<double> value, std::vector<Var> parents, std::function<void(Node&)> bw);

}  // namespace promptmr::ag
