#include "daf/eval/metrics.hpp"

#include <numeric>
#include <string>

namespace daf::eval {

namespace {

NDResult finish(NDResult r) {
  const double den = r.denominator();
  if (!(den > 0.0)) throw UndefinedMetricError("ND is undefined: the ground truth sums to zero in absolute value");
  r.nd = r.numerator() / den;
  return r;
}

}  // namespace

double NDResult::numerator() const { return std::accumulate(numerators.begin(), numerators.end(), 0.0); }
double NDResult::denominator() const { return std::accumulate(denominators.begin(), denominators.end(), 0.0); }

NDResult combine(const NDResult& a, const NDResult& b) {
  NDResult r;
  r.numerators = a.numerators;
  r.numerators.insert(r.numerators.end(), b.numerators.begin(), b.numerators.end());
  r.denominators = a.denominators;
  r.denominators.insert(r.denominators.end(), b.denominators.begin(), b.denominators.end());
  return finish(std::move(r));
}

NDResult nd_metric(std::span<const data::SeriesWindow> truth, std::span<const model::Forecast> forecasts) {
  if (truth.size() != forecasts.size()) {
    throw DimensionError("ND: " + std::to_string(truth.size()) + " truth windows but " +
                         std::to_string(forecasts.size()) + " forecasts");
  }
  NDResult r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& w = truth[i];
    const auto& f = forecasts[i];
    if (w.scaled) throw ContractError("ND needs ground truth in original units");
    if (!f.descaled) throw ContractError("ND needs descaled forecasts");
    if (w.y.size() != f.values.size()) throw DimensionError("ND: forecast and truth horizons differ");
    r.numerators.push_back((w.y - f.values).cwiseAbs().sum());
    r.denominators.push_back(w.y.cwiseAbs().sum());
  }
  return finish(std::move(r));
}

NDResult nd_metric(const num::Matrix& truth, const num::Matrix& prediction) {
  if (truth.rows() != prediction.rows() || truth.cols() != prediction.cols()) {
    throw DimensionError("ND: truth and prediction shapes differ");
  }
  NDResult r;
  for (Index i = 0; i < truth.rows(); ++i) {
    r.numerators.push_back((truth.row(i) - prediction.row(i)).cwiseAbs().sum());
    r.denominators.push_back(truth.row(i).cwiseAbs().sum());
  }
  return finish(std::move(r));
}

}  // namespace daf::eval
