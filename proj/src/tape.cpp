#include "phasefno/tape.hpp"

#include <optional>
#include <string>

namespace phasefno::ad {

const Tensor& Var::value() const { return tape_->nodes_.at(id_).value; }

bool Var::tracked() const { return tape_->nodes_.at(id_).tracked; }

const Tensor& Gradients::of(const Var& leaf) const { return of(leaf.id()); }

const Tensor& Gradients::of(std::size_t id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) {
    throw std::out_of_range("gradients: node " + std::to_string(id) + " is not a tracked leaf");
  }
  return it->second;
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::logic_error("tape: input recorded on a different tape");
    node.inputs.push_back(in.id());
    node.tracked = node.tracked || nodes_[in.id()].tracked;
  }
  if (node.tracked) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw std::logic_error("backward: loss recorded on a different tape");
  const Node& root = nodes_[loss.id()];
  if (root.value.is_complex() || root.value.numel() != 1) {
    throw ShapeError("backward: loss must be a real scalar, got shape " +
                     to_string(root.value.shape()));
  }
  if (!root.tracked) throw std::invalid_argument("backward: loss does not depend on any leaf");

  std::vector<std::optional<Tensor>> grads(loss.id() + 1);
  grads[loss.id()] = Tensor::real(root.value.shape(), {1.0});

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.tracked || node.leaf || !grads[id]) continue;

    BackwardContext ctx;
    ctx.grad_output_ = &*grads[id];
    ctx.output_ = &node.value;
    for (std::size_t in : node.inputs) {
      ctx.inputs_.push_back(&nodes_[in].value);
      if (nodes_[in].tracked) {
        if (!grads[in]) grads[in] = Tensor::zeros_like(nodes_[in].value);
        ctx.grad_inputs_.push_back(&*grads[in]);
      } else {
        ctx.grad_inputs_.push_back(nullptr);
      }
    }
    node.backward(ctx);
    grads[id].reset();
  }

  Gradients out;
  for (std::size_t id = 0; id <= loss.id(); ++id) {
    const Node& node = nodes_[id];
    if (!node.leaf) continue;
    out.grads_.emplace(id, grads[id] ? std::move(*grads[id]) : Tensor::zeros_like(node.value));
  }
  return out;
}

}  // namespace phasefno::ad
