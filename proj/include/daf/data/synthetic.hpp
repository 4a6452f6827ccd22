#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "daf/data/dataset.hpp"

namespace daf::data {

/// Random sinusoids z_t = A sin(2 pi omega t + phi) + c + eps for t = 1..T+tau,
/// with A, c, omega, phi drawn uniformly per series and eps ~ N(0, noise_std^2).
struct SyntheticSpec {
  Index count = 0;
  Index history = 144;
  Index horizon = 18;
  double amplitude_min = 0.5;
  double amplitude_max = 5.0;
  double level_min = -3.0;
  double level_max = 3.0;
  // Cycles per time step; must lie in [1/T, 20/T].
  double frequency_min = 1.0 / 144.0;
  double frequency_max = 20.0 / 144.0;
  double phase_min = -2.0 * std::numbers::pi;
  double phase_max = 2.0 * std::numbers::pi;
  double noise_std = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<Series> generate_sinusoids(const SyntheticSpec& spec);

}  // namespace daf::data
