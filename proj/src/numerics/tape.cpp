#include "daf/numerics/tape.hpp"

#include <string>

namespace daf::num {

Var Tape::constant(Matrix value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.op = "parameter";
  node.value = param.value.matrix();
  node.param = &param;
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&param, id);
  return Var(this, id);
}

Var Tape::record(std::string_view op, Matrix value, std::vector<int> parents, BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  if (grad_enabled_) {
    for (int p : parents) node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
  }
  if (node.requires_grad) {
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  auto& node = nodes_[id];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ContractError("backward root belongs to another tape");
  const auto& v = nodes_[root.id_].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("backward requires a scalar root, got " + std::to_string(v.rows()) + "x" +
                        std::to_string(v.cols()));
  }
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[root.id_].requires_grad) return;
  grad(root.id_).setOnes();
  for (int id = root.id_; id >= 0; --id) {
    auto& node = nodes_[id];
    if (node.grad.size() == 0 || !node.requires_grad) continue;
    // Closures only write to parents, which precede this node.
    if (node.backward) node.backward(*this, node.grad);
  }
  for (auto& node : nodes_) {
    if (node.param == nullptr || node.grad.size() == 0) continue;
    node.param->grad.matrix() += node.grad;
    node.param->has_grad = true;
  }
}

}  // namespace daf::num
