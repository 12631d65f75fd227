#pragma once

#include <functional>
#include <vector>

#include "helmnet/neural/tensor.hpp"

namespace helmnet::nn {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Reverse-mode tape. Values are computed eagerly; each recorded op may attach a
/// closure that pulls its output gradient back into its inputs. Gradients
/// accumulate.
template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<Scalar> constant(Tensor<Scalar> v) { return push(std::move(v), false, nullptr); }

  /// Leaf bound to a parameter; backward() adds its gradient into p.grad.
  Var<Scalar> parameter(Parameter<Scalar>& p) {
    Var<Scalar> v = push(p.value, grad_enabled_, nullptr);
    nodes_[std::size_t(v.id)].param = &p;
    return v;
  }

  /// Record an op output. `backward` is kept only if grads are enabled and
  /// some input requires them.
  Var<Scalar> record(Tensor<Scalar> out, std::initializer_list<Var<Scalar>> inputs,
                     Backward backward) {
    bool rg = false;
    if (grad_enabled_) {
      for (const auto& in : inputs) rg = rg || requires_grad(in.id);
    }
    return push(std::move(out), rg, rg ? std::move(backward) : Backward{});
  }

  const Tensor<Scalar>& value(int id) const { return nodes_[std::size_t(id)].value; }
  bool requires_grad(int id) const { return nodes_[std::size_t(id)].requires_grad; }

  /// Gradient slot of a node, zero-initialized on first access.
  Tensor<Scalar>& grad(int id) {
    Node& n = nodes_[std::size_t(id)];
    if (n.grad.empty()) n.grad = Tensor<Scalar>(n.value.shape());
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[std::size_t(id)].grad.empty(); }

  /// Seed d(root) = seed (or ones for a scalar root) and run the tape backwards.
  void backward(Var<Scalar> root, const Tensor<Scalar>* seed = nullptr) {
    if (!requires_grad(root.id)) return;
    Tensor<Scalar>& g = grad(root.id);
    if (seed) {
      if (!(seed->shape() == g.shape())) throw DimensionError("backward: seed shape mismatch");
      g.array() += seed->array();
    } else {
      if (g.numel() != 1) throw DimensionError("backward: root must be scalar without a seed");
      g.array() += Scalar(1);
    }
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[std::size_t(id)];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param) n.param->grad.array() += n.grad.array();
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<Scalar>* param = nullptr;
  };

  Var<Scalar> push(Tensor<Scalar> v, bool rg, Backward bw) {
    nodes_.push_back(Node{std::move(v), Tensor<Scalar>(), rg, std::move(bw), nullptr});
    return Var<Scalar>{this, int(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace helmnet::nn
