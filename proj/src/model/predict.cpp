#include "daf/model/predict.hpp"

#include <algorithm>

namespace daf::model {

void descale_forecast(Forecast& f) {
  if (f.descaled) throw ContractError("forecast of series " + std::to_string(f.series_id) + " is already descaled");
  f.values = data::descale(f.values, f.scale);
  f.descaled = true;
}

std::vector<Forecast> predict(DafModel& model, std::span<const data::SeriesWindow> windows, Domain domain,
                              Index batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (domain == Domain::source && !model.config().has_source()) {
    throw ContractError("model has no source-domain generator");
  }
  const auto refs = model.generator(domain);
  std::vector<Forecast> out;
  out.reserve(windows.size());
  for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<data::SeriesWindow> scaled;
    scaled.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      if (windows[i].scaled) throw ContractError("predict expects raw windows");
      scaled.push_back(data::scale_window(windows[i]));
    }
    const auto batch = make_batch(std::span<const data::SeriesWindow>(scaled));
    num::Tape tape(false);
    const auto g = bind(tape, refs);
    const auto result = generator_forward(tape, batch, g, model.config(), {.reconstruct = false, .forecast_qk = false});
    const Matrix& fc = result.forecast.value();
    for (Index b = 0; b < batch.batch; ++b) {
      Forecast f;
      f.series_id = batch.series_ids[static_cast<std::size_t>(b)];
      f.values = fc.middleCols(b * batch.horizon, batch.horizon).transpose();
      f.scale = batch.scales[static_cast<std::size_t>(b)];
      descale_forecast(f);
      out.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace daf::model
