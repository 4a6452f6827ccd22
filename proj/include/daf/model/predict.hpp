#pragma once

#include <span>
#include <vector>

#include "daf/model/generator.hpp"

namespace daf::model {

/// Point forecast of one window. `descaled` flips exactly once, when the
/// window's scale is applied.
struct Forecast {
  std::int64_t series_id = 0;
  Vector values;
  data::Scale scale;
  bool descaled = false;
};

// Maps a scaled forecast back to the series' units; throws if already descaled.
void descale_forecast(Forecast& f);

/// Forecasts raw (unscaled) windows with the given domain's generator. Each
/// window is standardized on its history, run through the generator and the
/// forecast descaled. Windows are processed in chunks of `batch_size`.
std::vector<Forecast> predict(DafModel& model, std::span<const data::SeriesWindow> windows, Domain domain,
                              Index batch_size = 256);

}  // namespace daf::model
