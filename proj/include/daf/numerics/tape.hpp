#pragma once

#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "daf/numerics/array.hpp"
#include "daf/numerics/param_store.hpp"

namespace daf::num {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode computation record.
///
/// Nodes are appended in evaluation order, so the node vector is already a
/// topological order of the (acyclic) computation; backward walks it once in
/// reverse. Each op stores a closure that pushes its output gradient into its
/// parents. Gradients of parameter leaves are added into `Parameter::grad`
/// when backward finishes.
class Tape {
 public:
  // Receives the node's output gradient and accumulates into parents.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Memoized: the same Parameter always maps to the same leaf on one tape.
  Var parameter(Parameter& param);

  Var record(std::string_view op, Matrix value, std::vector<int> parents, BackwardFn backward);

  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  std::string_view op(int id) const { return nodes_[id].op; }
  const std::vector<int>& parents(int id) const { return nodes_[id].parents; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Lazily zero-initialized gradient buffer of a node; only valid during backward.
  Matrix& grad(int id);

  template <typename Expr>
  void accumulate(int id, const Expr& contribution) {
    if (!nodes_[id].requires_grad) return;
    grad(id).noalias() += contribution;
  }

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

inline void backward(Var root) { root.tape().backward(root); }

}  // namespace daf::num
