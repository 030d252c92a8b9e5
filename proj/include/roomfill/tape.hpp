#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "roomfill/tensor.hpp"

// Reverse-mode autodiff on a linear tape. Nodes are appended in evaluation
// order, so walking the tape backwards visits every node after all of its
// consumers; each node's backward closure reads its own gradient and
// accumulates into its inputs' gradients by id.
namespace roomfill::ad {

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  // Differentiable leaf (parameters, inputs under test).
  int leaf(Tensor<T> value) { return push(std::move(value), nullptr, true); }

  // Non-differentiable constant; accumulation into it is a no-op.
  int constant(Tensor<T> value) { return push(std::move(value), nullptr, false); }

  int push(Tensor<T> value, BackwardFn fn, bool needs_grad = true) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(fn), needs_grad});
    return int(nodes_.size()) - 1;
  }

  const Tensor<T>& val(int id) const {
    check_id(id);
    return nodes_[std::size_t(id)].value;
  }

  bool has_grad(int id) const {
    check_id(id);
    return nodes_[std::size_t(id)].grad.dim() > 0;
  }

  // Gradient tensor of a node; zero-allocated on first touch.
  Tensor<T>& grad(int id) {
    check_id(id);
    Node& n = nodes_[std::size_t(id)];
    if (n.grad.dim() == 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // Accumulates g into the node's gradient unless the node is a constant.
  void accumulate(int id, const Tensor<T>& g) {
    check_id(id);
    Node& n = nodes_[std::size_t(id)];
    if (!n.needs_grad) return;
    Tensor<T>& dst = grad(id);
    RF_CHECK_SHAPE(dst.same_shape(g), "gradient shape mismatch on node ", id);
    for (std::int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
  }

  // Backpropagates from a scalar root. Nodes unreachable from the root keep
  // unallocated gradients and their closures are skipped.
  void backward(int root) {
    RF_CHECK(root >= 0 && root < int(nodes_.size()), ShapeError,
             "backward root out of range");
    RF_CHECK(nodes_[std::size_t(root)].value.numel() == 1, ShapeError,
             "backward root must be scalar");
    grad(root).fill(T(1));
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[std::size_t(id)];
      if (n.fn && n.grad.dim() > 0) n.fn(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  void check_id(int id) const {
    RF_CHECK(id >= 0 && id < int(nodes_.size()), ShapeError, "tape node id ",
             id, " out of range (unbound parameter?)");
  }

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until touched
    BackwardFn fn;
    bool needs_grad;
  };

  std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace roomfill::ad
