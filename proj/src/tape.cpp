#include "qamatch/tape.hpp"

#include <algorithm>
#include <string>

#include "qamatch/errors.hpp"

namespace qamatch {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->nodes_[id_].value();
}

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ContractError("item() on non-scalar of shape " + shape_str(v.shape()));
  return v[0];
}

Var Tape::constant(Tensor value) {
  Node node;
  node.own = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(const Tensor& param) {
  if (auto it = leaves_.find(&param); it != leaves_.end()) return Var(this, it->second);
  Node node;
  node.ref = &param;
  node.needs_grad = record_grad_ && param.requires_grad();
  nodes_.push_back(std::move(node));
  leaves_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.own = std::move(value);
  if (record_grad_) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [this](Var v) {
      if (v.tape_ != this) throw ContractError("operands recorded on different tapes");
      return nodes_[v.id_].needs_grad;
    });
    if (node.needs_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.id_];
  if (!node.needs_grad) return {};
  if (node.grad.empty()) node.grad.assign(node.value().size(), 0.0);
  return node.grad;
}

std::vector<double> Tape::grad(Var v) const {
  const Node& node = nodes_[v.id_];
  if (node.grad.empty()) return std::vector<double>(node.value().size(), 0.0);
  return node.grad;
}

void Tape::backward(Var output) {
  if (output.tape_ != this) throw ContractError("backward() on a Var from another tape");
  if (output.value().size() != 1) {
    throw ContractError("backward() needs a scalar output, got shape " + shape_str(output.shape()));
  }
  for (Node& node : nodes_) node.grad.clear();
  if (!nodes_[output.id_].needs_grad) return;
  nodes_[output.id_].grad.assign(1, 1.0);

  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, node.value(), node.grad);
  }

  for (auto [param, id] : leaves_) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.needs_grad) continue;
    param->accumulate_grad(node.grad);
  }
}

}  // namespace qamatch
