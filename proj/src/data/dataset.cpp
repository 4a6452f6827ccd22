#include "daf/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "daf/numerics/random.hpp"

namespace daf::data {

const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain parse_domain(const std::string& text) {
  if (text == "source") return Domain::source;
  if (text == "target") return Domain::target;
  throw ConfigError("unknown domain '" + text + "'");
}

const char* to_string(CovariateKind k) {
  switch (k) {
    case CovariateKind::hourly: return "hourly";
    case CovariateKind::daily: return "daily";
    case CovariateKind::positional: return "positional";
    case CovariateKind::none: return "none";
  }
  return "none";
}

CovariateKind parse_covariate_kind(const std::string& text) {
  if (text == "hourly") return CovariateKind::hourly;
  if (text == "daily") return CovariateKind::daily;
  if (text == "positional") return CovariateKind::positional;
  if (text == "none") return CovariateKind::none;
  throw ConfigError("unknown covariate kind '" + text + "' (expected hourly, daily, positional or none)");
}

Index covariate_dim(CovariateKind k) { return k == CovariateKind::none ? 0 : 2; }

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

// Maps 0..count-1 affinely onto [-0.5, 0.5].
double unit_feature(std::int64_t value, std::int64_t count) {
  return static_cast<double>(value) / static_cast<double>(count - 1) - 0.5;
}

}  // namespace

Vector time_covariates(CovariateKind kind, std::int64_t absolute_index) {
  Vector f(2);
  switch (kind) {
    case CovariateKind::hourly:
      f(0) = unit_feature(floor_mod(absolute_index / 24, 7), 7);
      f(1) = unit_feature(floor_mod(absolute_index, 24), 24);
      return f;
    case CovariateKind::daily:
      f(0) = unit_feature(floor_mod(absolute_index, 7), 7);
      // Months approximated as 31 days; integer indices carry no calendar.
      f(1) = unit_feature(floor_mod(absolute_index, 31), 31);
      return f;
    default:
      throw ConfigError(std::string("time_covariates needs an hourly or daily index, got ") + to_string(kind));
  }
}

namespace {

Matrix window_covariates(CovariateKind kind, std::int64_t start, Index length) {
  Matrix cov(covariate_dim(kind), length);
  for (Index j = 0; j < length; ++j) {
    switch (kind) {
      case CovariateKind::none: break;
      case CovariateKind::positional:
        cov(0, j) = unit_feature(j, length);
        cov(1, j) = 0.0;
        break;
      default: cov.col(j) = time_covariates(kind, start + j); break;
    }
  }
  return cov;
}

}  // namespace

WindowingResult make_windows(const std::vector<Series>& series, Index history, Index horizon,
                             CovariateKind covariates, Domain domain, Index stride) {
  if (history < 1 || horizon < 1) throw ConfigError("window history and horizon must be positive");
  if (stride < 1) throw ConfigError("window stride must be positive");
  const Index length = history + horizon;
  WindowingResult result;
  for (const auto& s : series) {
    const Index L = s.values.size();
    if (L < length) {
      result.warnings.push_back("series " + std::to_string(s.id) + " has length " + std::to_string(L) +
                                " < T+tau=" + std::to_string(length) + "; skipped");
      continue;
    }
    for (Index n = 0; n + length <= L; n += stride) {
      SeriesWindow w;
      w.series_id = s.id;
      w.start = s.start + n;
      w.x = s.values.segment(n, history);
      w.y = s.values.segment(n + history, horizon);
      w.covariates = window_covariates(covariates, w.start, length);
      w.domain = domain;
      result.windows.push_back(std::move(w));
    }
  }
  if (result.windows.empty()) throw EmptyDatasetError("no series is long enough to form a window");
  return result;
}

SeriesWindow scale_window(const SeriesWindow& w) {
  if (w.x.size() == 0) throw ContractError("scale_window needs a non-empty history");
  if (w.scaled) throw ContractError("window is already scaled");
  SeriesWindow out = w;
  const double center = w.x.mean();
  const double var = (w.x.array() - center).square().mean();
  const double spread = std::max(std::sqrt(var), kMinSpread);
  out.x = (w.x.array() - center) / spread;
  out.y = (w.y.array() - center) / spread;
  out.scale = {center, spread};
  out.scaled = true;
  return out;
}

Vector descale(const Vector& scaled, const Scale& scale) {
  return (scaled.array() * scale.spread + scale.center).matrix();
}

DatasetSplit split_dataset(std::vector<SeriesWindow> windows, double train_fraction, double validation_fraction,
                           double test_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && validation_fraction > 0.0 && test_fraction > 0.0)) {
    throw ConfigError("split fractions must all be positive");
  }
  if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto n = static_cast<Index>(windows.size());
  const auto n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<Index>(std::llround(validation_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_val < 1 || n - n_train - n_val < 1) {
    throw ConfigError("split of " + std::to_string(n) + " windows leaves an empty partition");
  }
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = num::make_rng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  for (Index i = 0; i < n; ++i) {
    auto& w = windows[order[static_cast<std::size_t>(i)]];
    if (i < n_train) split.train.push_back(std::move(w));
    else if (i < n_train + n_val) split.validation.push_back(std::move(w));
    else split.test.push_back(std::move(w));
  }
  return split;
}

namespace {

template <typename T>
bool parse_number(const std::string& field, T& out) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::vector<Series> read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  long line_no = 1;
  if (!std::getline(in, line) || trim(line) != "series_id,t,value") {
    throw ParseError("expected header 'series_id,t,value' in " + path.string(), line_no);
  }

  struct Builder {
    std::int64_t start = 0;
    std::int64_t last_t = 0;
    std::vector<double> values;
  };
  std::map<std::int64_t, Builder> builders;
  std::vector<std::int64_t> order;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 3) throw ParseError("expected 3 fields, got " + std::to_string(fields.size()), line_no);
    std::int64_t id = 0, t = 0;
    double value = 0.0;
    if (!parse_number(fields[0], id)) throw ParseError("non-integer series_id '" + fields[0] + "'", line_no);
    if (!parse_number(fields[1], t)) throw ParseError("non-integer t '" + fields[1] + "'", line_no);
    if (!parse_number(fields[2], value) || !std::isfinite(value)) {
      throw ParseError("non-numeric value '" + fields[2] + "'", line_no);
    }
    auto [it, inserted] = builders.try_emplace(id);
    auto& b = it->second;
    if (inserted) {
      order.push_back(id);
      b.start = t;
    } else if (t != b.last_t + 1) {
      throw ParseError("gap in t for series " + std::to_string(id) + ": expected " + std::to_string(b.last_t + 1) +
                           ", got " + std::to_string(t),
                       line_no);
    }
    b.last_t = t;
    b.values.push_back(value);
  }

  std::vector<Series> out;
  for (auto id : order) {
    auto& b = builders.at(id);
    Series s;
    s.id = id;
    s.start = b.start;
    s.values = Eigen::Map<const Vector>(b.values.data(), static_cast<Index>(b.values.size()));
    out.push_back(std::move(s));
  }
  return out;
}

void write_series_csv(const std::filesystem::path& path, const std::vector<Series>& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "series_id,t,value\n";
  char buf[64];
  for (const auto& s : series) {
    for (Index k = 0; k < s.values.size(); ++k) {
      // Shortest representation that round-trips exactly.
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, s.values(k));
      out << s.id << ',' << (s.start + k) << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DatasetSplit ingest_csv(const std::filesystem::path& path, const IngestOptions& options) {
  auto series = read_series_csv(path);
  auto windows = make_windows(series, options.history, options.horizon, options.covariates, options.domain);
  return split_dataset(std::move(windows.windows), options.train_fraction, options.validation_fraction,
                       options.test_fraction, options.seed);
}

}  // namespace daf::data
