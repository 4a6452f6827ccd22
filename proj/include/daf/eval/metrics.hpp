#pragma once

#include <span>
#include <vector>

#include "daf/data/dataset.hpp"
#include "daf/model/predict.hpp"

namespace daf::eval {

using num::Index;

/// Normalized deviation sum|z - z_hat| / sum|z|, pooled over every forecast
/// position of every window. Per-window sums are kept so results over
/// disjoint window sets can be merged exactly.
struct NDResult {
  double nd = 0.0;
  std::vector<double> numerators;
  std::vector<double> denominators;

  double numerator() const;
  double denominator() const;
};

// Pools two results; throws UndefinedMetricError if the pooled denominator is zero.
NDResult combine(const NDResult& a, const NDResult& b);

/// Truth windows must be raw and forecasts descaled, aligned one to one.
NDResult nd_metric(std::span<const data::SeriesWindow> truth, std::span<const model::Forecast> forecasts);

// Plain-matrix form: one window per row.
NDResult nd_metric(const num::Matrix& truth, const num::Matrix& prediction);

}  // namespace daf::eval
