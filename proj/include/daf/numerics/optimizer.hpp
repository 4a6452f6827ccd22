#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "daf/numerics/param_store.hpp"

namespace daf::num {

enum class Direction { descend, ascend };

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name so an
/// optimizer survives a deep copy of the ParamStore it updates.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  // Applies one update to every parameter and zeroes their gradients.
  // `ascend` moves along +grad. Throws ContractError if any parameter has no
  // gradient from a backward pass since its last update.
  void step(std::span<Parameter* const> params, Direction direction = Direction::descend);

  std::int64_t steps() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  struct Moments {
    Matrix first;
    Matrix second;
  };

  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments, std::less<>> moments_;
};

}  // namespace daf::num
