#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "daf/numerics/array.hpp"

namespace daf::num {

/// A named trainable array together with its gradient accumulator.
struct Parameter {
  std::string name;
  NumArray value;
  NumArray grad;
  // Set by backward, cleared by the optimizer.
  bool has_grad = false;

  void zero_grad() {
    grad.set_zero();
    has_grad = false;
  }
};

/// Owns every trainable array of a model. Parameter addresses are stable for
/// the lifetime of the store; copies are deep.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter& add(std::string name, Shape shape);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  // Insertion order.
  const std::vector<std::string>& names() const noexcept { return order_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  // Parameters whose name starts with any of the given prefixes, in insertion order.
  std::vector<Parameter*> select(const std::vector<std::string>& prefixes);

  Index scalar_count() const;
  void zero_grads();

  // Copies values (not gradients) from a store with the same layout.
  void assign_values(const ParamStore& other);

  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, std::unique_ptr<Parameter>, std::less<>> params_;
  std::vector<std::string> order_;
};

}  // namespace daf::num
