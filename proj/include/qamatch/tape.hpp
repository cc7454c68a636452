#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>

#include "qamatch/tensor.hpp"

namespace qamatch {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order and replayed in
// reverse by backward(). Leaves bind persistent parameter tensors: after
// backward() their gradients are added into the tensor's own grad buffer, so
// repeated backward passes accumulate until the caller zeroes them.
//
// A tape is single-owner; distinct tapes may run on distinct threads as long
// as they do not bind the same requires_grad tensor.
class Tape {
 public:
  // Receives the node's own output value and its accumulated gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out, std::span<const double> out_grad)>;

  // With record_grad=false no backward closures are kept (inference mode).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Binds `param` by reference; it must outlive the tape and stay unmodified
  // until backward() returns. Binding the same tensor twice yields one node.
  Var leaf(const Tensor& param);

  // Requires a single-element output recorded on this tape.
  void backward(Var output);

  // Gradient of the last backward() output w.r.t. `v` (zeros if unreached).
  std::vector<double> grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_grad_; }

  // --- op-implementation surface ---
  bool needs_grad(Var v) const { return nodes_[v.id_].needs_grad; }
  // Appends a node; `op` names the operation in numeric diagnostics.
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }
  // Accumulation target for `v` during backward; empty if `v` needs no grad.
  std::span<double> grad_buffer(Var v);

 private:
  friend class Var;
  struct Node {
    Tensor own;
    const Tensor* ref = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool needs_grad = false;

    const Tensor& value() const { return ref ? *ref : own; }
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> leaves_;
  bool record_grad_;
};

}  // namespace qamatch
