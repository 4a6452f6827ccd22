#include "daf/numerics/param_store.hpp"

#include <algorithm>

namespace daf::num {

ParamStore::ParamStore(const ParamStore& other) { *this = other; }

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this == &other) return *this;
  params_.clear();
  order_ = other.order_;
  for (const auto& [name, param] : other.params_) {
    params_.emplace(name, std::make_unique<Parameter>(*param));
  }
  return *this;
}

Parameter& ParamStore::add(std::string name, Shape shape) {
  if (params_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto param = std::make_unique<Parameter>();
  param->name = name;
  param->value = NumArray(shape);
  param->grad = NumArray(std::move(shape));
  auto& ref = *param;
  order_.push_back(name);
  params_.emplace(std::move(name), std::move(param));
  return ref;
}

Parameter& ParamStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *it->second;
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *it->second;
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

std::vector<Parameter*> ParamStore::parameters() {
  std::vector<Parameter*> out;
  out.reserve(order_.size());
  for (const auto& name : order_) out.push_back(params_.find(name)->second.get());
  return out;
}

std::vector<const Parameter*> ParamStore::parameters() const {
  std::vector<const Parameter*> out;
  out.reserve(order_.size());
  for (const auto& name : order_) out.push_back(params_.find(name)->second.get());
  return out;
}

std::vector<Parameter*> ParamStore::select(const std::vector<std::string>& prefixes) {
  std::vector<Parameter*> out;
  for (const auto& name : order_) {
    bool match = std::any_of(prefixes.begin(), prefixes.end(),
                             [&](const std::string& p) { return name.starts_with(p); });
    if (match) out.push_back(params_.find(name)->second.get());
  }
  return out;
}

Index ParamStore::scalar_count() const {
  Index n = 0;
  for (const auto& [_, p] : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [_, p] : params_) p->zero_grad();
}

void ParamStore::assign_values(const ParamStore& other) {
  if (order_ != other.order_) throw StateMismatchError("parameter layouts differ");
  for (auto& [name, p] : params_) {
    const auto& src = other.at(name);
    if (src.value.shape() != p->value.shape()) {
      throw StateMismatchError("parameter '" + name + "' has shape " + shape_string(p->value.shape()) +
                               " but source has " + shape_string(src.value.shape()));
    }
    p->value = src.value;
  }
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (order_ != other.order_) return false;
  return std::all_of(params_.begin(), params_.end(),
                     [&](const auto& kv) { return kv.second->value == other.at(kv.first).value; });
}

}  // namespace daf::num
