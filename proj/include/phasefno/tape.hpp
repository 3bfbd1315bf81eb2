#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "phasefno/tensor.hpp"

namespace phasefno::ad {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool tracked() const;
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// View handed to a backward rule. Gradients of untracked inputs are null.
class BackwardContext {
 public:
  const Tensor& grad_output() const { return *grad_output_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t i) const { return *inputs_[i]; }
  Tensor* grad_input(std::size_t i) const { return grad_inputs_[i]; }

 private:
  friend class Tape;
  const Tensor* grad_output_ = nullptr;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> grad_inputs_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Gradients of a scalar loss with respect to tracked leaves, keyed by node id.
class Gradients {
 public:
  const Tensor& of(const Var& leaf) const;
  const Tensor& of(std::size_t id) const;
  bool contains(std::size_t id) const { return grads_.contains(id); }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Define-by-run record of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction. A tape is not thread-safe; use one per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);

  /// Appends an operation. The output is tracked when any input is.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool tracked = false;
    bool leaf = false;
  };

  std::deque<Node> nodes_;
};

}  // namespace phasefno::ad
