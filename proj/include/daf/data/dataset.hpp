#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "daf/numerics/array.hpp"

namespace daf::data {

using num::Index;
using num::Matrix;
using num::Vector;

enum class Domain { source, target };

const char* to_string(Domain d);
Domain parse_domain(const std::string& text);

/// Calendar features attached to each position.
///  - hourly: (day of week, hour of day), index counts hours from Monday 00:00
///  - daily: (day of week, day of month), index counts days from a Monday that starts a month
///  - positional: (phase within the window, 0), for data without a calendar
///  - none: no covariates
enum class CovariateKind { hourly, daily, positional, none };

const char* to_string(CovariateKind k);
CovariateKind parse_covariate_kind(const std::string& text);
Index covariate_dim(CovariateKind k);

/// Two features in [-0.5, 0.5] for an absolute hourly or daily index.
Vector time_covariates(CovariateKind kind, std::int64_t absolute_index);

struct Scale {
  double center = 0.0;
  double spread = 1.0;
};

struct SeriesWindow {
  std::int64_t series_id = 0;
  // Absolute index of x(0) in the originating series.
  std::int64_t start = 0;
  Vector x;
  Vector y;
  // covariate_dim x (T + tau); may have zero rows.
  Matrix covariates;
  Domain domain = Domain::target;
  Scale scale;
  bool scaled = false;

  Index history() const { return x.size(); }
  Index horizon() const { return y.size(); }
};

/// A raw univariate series; `start` is the absolute index of values(0).
struct Series {
  std::int64_t id = 0;
  std::int64_t start = 0;
  Vector values;
};

struct DatasetSplit {
  std::vector<SeriesWindow> train;
  std::vector<SeriesWindow> validation;
  std::vector<SeriesWindow> test;
};

struct WindowingResult {
  std::vector<SeriesWindow> windows;
  std::vector<std::string> warnings;
};

/// All length-(T+tau) windows of every series at the given stride, each split
/// into history x and future y. Series shorter than T+tau are skipped with a
/// warning; if nothing remains an EmptyDatasetError is thrown.
WindowingResult make_windows(const std::vector<Series>& series, Index history, Index horizon,
                             CovariateKind covariates, Domain domain, Index stride = 1);

/// Standardizes x and y with the mean and (clamped) standard deviation of x.
SeriesWindow scale_window(const SeriesWindow& w);
Vector descale(const Vector& scaled, const Scale& scale);

constexpr double kMinSpread = 1e-6;

/// Uniform random disjoint assignment. Counts are round(f*n) for train and
/// validation; test takes the remainder.
DatasetSplit split_dataset(std::vector<SeriesWindow> windows, double train_fraction, double validation_fraction,
                           double test_fraction, std::uint64_t seed);

// Long-format CSV with header `series_id,t,value`; t consecutive per series.
std::vector<Series> read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, const std::vector<Series>& series);

struct IngestOptions {
  Index history = 0;
  Index horizon = 0;
  CovariateKind covariates = CovariateKind::none;
  Domain domain = Domain::target;
  double train_fraction = 1.0 / 3.0;
  double validation_fraction = 1.0 / 3.0;
  double test_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;
};

DatasetSplit ingest_csv(const std::filesystem::path& path, const IngestOptions& options);

}  // namespace daf::data
