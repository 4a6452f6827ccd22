#include "daf/numerics/optimizer.hpp"

#include <cmath>

namespace daf::num {

Adam::Adam(AdamOptions options) : options_(options) {
  if (!(options_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) || !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

void Adam::step(std::span<Parameter* const> params, Direction direction) {
  for (const Parameter* p : params) {
    if (!p->has_grad) throw ContractError("parameter '" + p->name + "' has no gradient for this step");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  const double sign = direction == Direction::ascend ? -1.0 : 1.0;

  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    auto& m = it->second;
    const auto& value = p->value.matrix();
    if (inserted || m.first.rows() != value.rows() || m.first.cols() != value.cols()) {
      m.first = Matrix::Zero(value.rows(), value.cols());
      m.second = Matrix::Zero(value.rows(), value.cols());
    }
    const Matrix g = sign * p->grad.matrix();
    m.first = options_.beta1 * m.first + (1.0 - options_.beta1) * g;
    m.second = options_.beta2 * m.second + (1.0 - options_.beta2) * g.cwiseProduct(g);
    p->value.matrix().array() -=
        options_.learning_rate * (m.first.array() / c1) / ((m.second.array() / c2).sqrt() + options_.epsilon);
    p->zero_grad();
  }
}

}  // namespace daf::num
