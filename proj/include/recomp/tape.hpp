// Reverse-mode gradient tape. Ops append nodes in forward order, which makes
// the reversed node list a valid topological order for backprop. A tape is
// single-owner: build one per training step and discard it after the
// optimizer has consumed the gradients.

#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "recomp/tensor.hpp"

namespace recomp {

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on first contribution
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  // recording=false skips backward-closure construction entirely; use for
  // eval/sampling passes.
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var leaf(const Tensor<T>& t, bool requires_grad) {
    return emplace(t.shape, t.data, requires_grad && recording_);
  }

  Var leaf(Shape shape, std::vector<T> value, bool requires_grad) {
    return emplace(std::move(shape), std::move(value), requires_grad && recording_);
  }

  Var constant(Shape shape, std::vector<T> value) {
    return emplace(std::move(shape), std::move(value), false);
  }

  Var scalar(T v) { return constant({1}, {v}); }

  Var emplace(Shape shape, std::vector<T> value, bool requires_grad) {
    if (numel(shape) != int64_t(value.size()))
      throw Error(ErrorKind::Dimension, "tape node: shape " + shape_str(shape) +
                                            " does not match buffer of " +
                                            std::to_string(value.size()) + " elements");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad && recording_;
    nodes_.push_back(std::move(n));
    return Var{int32_t(nodes_.size() - 1)};
  }

  Node& node(Var v) { return nodes_.at(size_t(v.id)); }
  const Node& node(Var v) const { return nodes_.at(size_t(v.id)); }

  const Shape& shape(Var v) const { return node(v).shape; }
  int64_t numel_of(Var v) const { return int64_t(node(v).value.size()); }

  std::span<const T> value(Var v) const { return node(v).value; }

  Tensor<T> value_tensor(Var v) const { return Tensor<T>(node(v).shape, node(v).value); }

  // Gradient accumulation buffer, zero-initialized on first use.
  std::vector<T>& grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  // Gradient of a node after backward(); exactly zero for leaves the loss
  // never reached.
  std::span<const T> grad(Var v) { return grad_buffer(v); }

  Tensor<T> grad_tensor(Var v) { return Tensor<T>(node(v).shape, grad_buffer(v)); }

  // Reverse pass from a scalar loss node.
  void backward(Var loss) {
    Node& ln = node(loss);
    if (ln.value.size() != 1)
      throw Error(ErrorKind::Contract,
                  "backward expects a scalar loss, got shape " + shape_str(ln.shape));
    if (!recording_)
      throw Error(ErrorKind::Contract, "backward on a non-recording tape");
    grad_buffer(loss)[0] += T(1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (!n.backward) continue;
      if (n.grad.empty()) continue;  // node does not influence the loss
      n.backward(*this);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace recomp
