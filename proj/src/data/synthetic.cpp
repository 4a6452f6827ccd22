#include "daf/data/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "daf/numerics/random.hpp"

namespace daf::data {

void SyntheticSpec::validate() const {
  if (count < 1) throw ConfigError("synthetic count must be at least 1");
  if (history < 1 || horizon < 1) throw ConfigError("synthetic history and horizon must be positive");
  if (!(amplitude_min <= amplitude_max)) throw ConfigError("amplitude_min exceeds amplitude_max");
  if (!(level_min <= level_max)) throw ConfigError("level_min exceeds level_max");
  if (!(phase_min <= phase_max)) throw ConfigError("phase_min exceeds phase_max");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  const double T = static_cast<double>(history);
  // Small slack so 1/T written as a decimal still validates.
  const double lo = 1.0 / T * (1.0 - 1e-9);
  const double hi = 20.0 / T * (1.0 + 1e-9);
  if (!(frequency_min <= frequency_max) || frequency_min < lo || frequency_max > hi) {
    throw ConfigError("frequency bounds [" + std::to_string(frequency_min) + ", " + std::to_string(frequency_max) +
                      "] must be ordered and lie within [1/T, 20/T] for T=" + std::to_string(history));
  }
}

std::vector<Series> generate_sinusoids(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = num::make_rng(spec.seed, "sinusoids");
  auto uniform = [&rng](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::normal_distribution<double> noise(0.0, 1.0);
  const Index length = spec.history + spec.horizon;

  std::vector<Series> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (Index i = 0; i < spec.count; ++i) {
    const double amplitude = uniform(spec.amplitude_min, spec.amplitude_max);
    const double level = uniform(spec.level_min, spec.level_max);
    const double frequency = uniform(spec.frequency_min, spec.frequency_max);
    const double phase = uniform(spec.phase_min, spec.phase_max);
    Series s;
    s.id = i;
    s.start = 1;
    s.values.resize(length);
    for (Index k = 0; k < length; ++k) {
      const double t = static_cast<double>(k + 1);
      double z = amplitude * std::sin(2.0 * std::numbers::pi * frequency * t + phase) + level;
      if (spec.noise_std > 0.0) z += spec.noise_std * noise(rng);
      s.values(k) = z;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace daf::data
