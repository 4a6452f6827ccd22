#include "daf/eval/experiment.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "daf/eval/metrics.hpp"
#include "daf/model/predict.hpp"

namespace daf::eval {

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::cold_start: return "cold-start";
    case Protocol::few_shot: return "few-shot";
    case Protocol::ablation: return "ablation";
  }
  return "few-shot";
}

Protocol parse_protocol(const std::string& text) {
  if (text == "cold-start") return Protocol::cold_start;
  if (text == "few-shot") return Protocol::few_shot;
  if (text == "ablation") return Protocol::ablation;
  throw ConfigError("unknown protocol '" + text + "' (expected cold-start, few-shot or ablation)");
}

const char* to_string(RunScale s) { return s == RunScale::large ? "large" : "desk"; }

RunScale parse_scale(const std::string& text) {
  if (text == "desk") return RunScale::desk;
  if (text == "large") return RunScale::large;
  throw ConfigError("unknown scale '" + text + "' (expected desk or large)");
}

ProtocolConfig ProtocolConfig::desk() {
  ProtocolConfig c;
  c.scale = RunScale::desk;
  c.train.batch_size = 32;
  c.train.eval_every = 20;
  c.train.patience = 30;
  c.train.epochs = 100'000;
  c.train.max_iterations = 600;
  return c;
}

ProtocolConfig ProtocolConfig::large() {
  ProtocolConfig c;
  c.scale = RunScale::large;
  c.source_count = 5000;
  c.cold_start_count = 5000;
  c.seeds = 5;
  c.train.batch_size = 64;
  c.train.eval_every = 0;
  c.train.patience = 10;
  c.train.epochs = 100'000;
  c.train.max_iterations = 100'000;
  return c;
}

void ProtocolConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (source_count < 3) throw ConfigError("source_count must be at least 3");
  if (cold_start_count < 3) throw ConfigError("cold_start_count must be at least 3");
  if (few_shot_holdout < 1) throw ConfigError("few_shot_holdout must be positive");
  if (seeds < 1) throw ConfigError("at least one seed is required");
  if (cold_start_histories.empty() || few_shot_counts.empty()) throw ConfigError("protocol grids must not be empty");
  for (Index n : few_shot_counts) {
    if (n < 1) throw ConfigError("few-shot series counts must be positive");
  }
  if (ablation_count < 1) throw ConfigError("ablation_count must be positive");
  if (ablation_variants.empty()) throw ConfigError("the ablation variant list is empty");
  for (const auto& v : ablation_variants) {
    model::ModelConfig m;
    training::TrainConfig t;
    configure_variant(v, m, t);
  }
  model.validate();
  train.validate();
}

nlohmann::json to_json(const ProtocolConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  return {
      {"scale", to_string(c.scale)},
      {"horizon", c.horizon},
      {"source", {{"count", c.source_count},
                  {"history", c.source_history},
                  {"frequency_min", c.source_frequency_min},
                  {"frequency_max", c.source_frequency_max}}},
      {"cold_start", {{"count", c.cold_start_count},
                      {"histories", c.cold_start_histories},
                      {"frequency", c.cold_start_frequency}}},
      {"few_shot", {{"counts", c.few_shot_counts},
                    {"holdout", c.few_shot_holdout},
                    {"frequency_min", c.few_shot_frequency_min},
                    {"frequency_max", c.few_shot_frequency_max}}},
      {"ablation", {{"count", c.ablation_count}, {"variants", c.ablation_variants}}},
      {"signal", {{"amplitude_min", c.amplitude_min},
                  {"amplitude_max", c.amplitude_max},
                  {"level_min", c.level_min},
                  {"level_max", c.level_max},
                  {"noise_std", c.noise_std}}},
      {"seeds", c.seeds},
      {"root_seed", c.root_seed},
      {"model", {{"hidden", m.hidden},
                 {"mlp_layers", m.mlp_layers},
                 {"kernel_sizes", m.kernel_sizes},
                 {"disc_forecast_region", m.disc_forecast_region}}},
      {"train", {{"lambda", t.lambda},
                 {"learning_rate", t.learning_rate},
                 {"epochs", t.epochs},
                 {"batch_size", t.batch_size},
                 {"patience", t.patience},
                 {"eval_every", t.eval_every},
                 {"max_iterations", t.max_iterations}}},
  };
}

std::vector<std::uint64_t> run_seeds(const ProtocolConfig& c) {
  std::vector<std::uint64_t> out;
  for (Index i = 0; i < c.seeds; ++i) out.push_back(num::derive_seed(c.root_seed, "run/" + std::to_string(i)));
  return out;
}

namespace {

data::SyntheticSpec signal_spec(const ProtocolConfig& c) {
  data::SyntheticSpec s;
  s.horizon = c.horizon;
  s.amplitude_min = c.amplitude_min;
  s.amplitude_max = c.amplitude_max;
  s.level_min = c.level_min;
  s.level_max = c.level_max;
  s.noise_std = c.noise_std;
  return s;
}

std::vector<data::SeriesWindow> windows_of(const data::SyntheticSpec& spec, data::Domain domain) {
  return data::make_windows(data::generate_sinusoids(spec), spec.history, spec.horizon, data::CovariateKind::positional,
                            domain)
      .windows;
}

std::vector<data::SeriesWindow> source_windows(const ProtocolConfig& c, std::uint64_t seed) {
  auto spec = signal_spec(c);
  spec.count = c.source_count;
  spec.history = c.source_history;
  spec.frequency_min = c.source_frequency_min;
  spec.frequency_max = c.source_frequency_max;
  spec.seed = num::derive_seed(seed, "source");
  auto split = data::split_dataset(windows_of(spec, data::Domain::source), 0.8, 0.1, 0.1,
                                   num::derive_seed(seed, "source-split"));
  return std::move(split.train);
}

}  // namespace

TaskData make_cold_start_task(const ProtocolConfig& c, Index target_history, std::uint64_t seed) {
  TaskData task;
  task.source_train = source_windows(c, seed);
  auto spec = signal_spec(c);
  spec.count = c.cold_start_count;
  spec.history = target_history;
  spec.frequency_min = spec.frequency_max = c.cold_start_frequency;
  spec.seed = num::derive_seed(seed, "target/T=" + std::to_string(target_history));
  task.target = data::split_dataset(windows_of(spec, data::Domain::target), 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0,
                                    num::derive_seed(seed, "target-split"));
  return task;
}

TaskData make_few_shot_task(const ProtocolConfig& c, Index target_count, std::uint64_t seed) {
  TaskData task;
  task.source_train = source_windows(c, seed);
  auto spec = signal_spec(c);
  const Index total = target_count + 2 * c.few_shot_holdout;
  spec.count = total;
  spec.history = c.source_history;
  spec.frequency_min = c.few_shot_frequency_min;
  spec.frequency_max = c.few_shot_frequency_max;
  spec.seed = num::derive_seed(seed, "target/N=" + std::to_string(target_count));
  const double n = static_cast<double>(total);
  const double holdout = static_cast<double>(c.few_shot_holdout) / n;
  task.target = data::split_dataset(windows_of(spec, data::Domain::target), static_cast<double>(target_count) / n,
                                    holdout, 1.0 - static_cast<double>(target_count) / n - holdout,
                                    num::derive_seed(seed, "target-split"));
  return task;
}

RunResult run_once(const TaskData& task, model::ModelConfig model_config, training::TrainConfig train_config,
                   std::uint64_t seed) {
  model::DafModel m(model_config, num::derive_seed(seed, "init"));
  train_config.seed = num::derive_seed(seed, "train");
  const auto fit = training::fit(m, {task.source_train, task.target.train, task.target.validation}, train_config);
  const auto forecasts = model::predict(m, task.target.test, data::Domain::target);
  RunResult r;
  r.test_nd = nd_metric(task.target.test, forecasts).nd;
  r.best_validation_nd = fit.best_validation_nd;
  r.steps = fit.steps;
  return r;
}

void summarize(CellResult& cell) {
  const auto n = static_cast<double>(cell.nd.size());
  if (cell.nd.empty()) {
    cell.mean = cell.std = 0.0;
    return;
  }
  double sum = 0.0;
  for (double v : cell.nd) sum += v;
  cell.mean = sum / n;
  double ss = 0.0;
  for (double v : cell.nd) ss += (v - cell.mean) * (v - cell.mean);
  cell.std = cell.nd.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

bool ExperimentReport::ok() const {
  for (const auto& c : cells) {
    if (!c.ok()) return false;
  }
  return true;
}

const CellResult* ExperimentReport::find(const std::string& setting, const std::string& model) const {
  for (const auto& c : cells) {
    if (c.setting == setting && c.model == model) return &c;
  }
  return nullptr;
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"task", c.task},
                     {"setting", c.setting},
                     {"model", c.model},
                     {"nd", c.nd},
                     {"mean", c.mean},
                     {"std", c.std},
                     {"failures", c.failures}});
  }
  return {{"protocol", r.protocol}, {"config", r.config}, {"cells", cells}};
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.protocol = j.at("protocol").get<std::string>();
  r.config = j.at("config");
  for (const auto& c : j.at("cells")) {
    CellResult cell;
    cell.task = c.at("task").get<std::string>();
    cell.setting = c.at("setting").get<std::string>();
    cell.model = c.at("model").get<std::string>();
    cell.nd = c.at("nd").get<std::vector<double>>();
    cell.mean = c.at("mean").get<double>();
    cell.std = c.at("std").get<double>();
    cell.failures = c.at("failures").get<std::vector<std::string>>();
    r.cells.push_back(std::move(cell));
  }
  return r;
}

std::string format_table(const ExperimentReport& r) {
  std::vector<std::string> settings, models;
  auto remember = [](std::vector<std::string>& list, const std::string& v) {
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
  };
  for (const auto& c : r.cells) {
    remember(settings, c.setting);
    remember(models, c.model);
  }
  auto cell_text = [&](const std::string& s, const std::string& m) -> std::string {
    const auto* c = r.find(s, m);
    if (c == nullptr) return "-";
    if (!c->ok()) return "failed";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << c->mean << "+/-" << c->std;
    return os.str();
  };
  std::vector<std::size_t> width(models.size() + 1, 0);
  std::string task = r.cells.empty() ? r.protocol : r.cells.front().task;
  width[0] = std::max(task.size(), std::size_t{7});
  for (const auto& s : settings) width[0] = std::max(width[0], s.size());
  for (std::size_t j = 0; j < models.size(); ++j) {
    width[j + 1] = models[j].size();
    for (const auto& s : settings) width[j + 1] = std::max(width[j + 1], cell_text(s, models[j]).size());
  }
  std::ostringstream out;
  auto row = [&](const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
      out << (j == 0 ? "" : " | ") << std::left << std::setw(static_cast<int>(width[j])) << fields[j];
    }
    out << '\n';
  };
  std::vector<std::string> header{task};
  header.insert(header.end(), models.begin(), models.end());
  row(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 3 * models.size(), '-') << '\n';
  for (const auto& s : settings) {
    std::vector<std::string> fields{s};
    for (const auto& m : models) fields.push_back(cell_text(s, m));
    row(fields);
  }
  return out.str();
}

void configure_variant(const std::string& name, model::ModelConfig& m, training::TrainConfig& t) {
  if (name == "AttF" || name == "attf") {
    m.strategy = model::SharingStrategy::attf;
    t.adversarial = false;
  } else if (name == "DAF" || name == "full") {
    m.strategy = model::SharingStrategy::full;
    t.adversarial = true;
  } else if (name == "no-adv") {
    m.strategy = model::SharingStrategy::full;
    t.adversarial = false;
  } else {
    m.strategy = model::parse_strategy(name);
    if (m.strategy == model::SharingStrategy::full || m.strategy == model::SharingStrategy::attf) {
      throw ConfigError("unknown model variant '" + name + "'");
    }
    t.adversarial = true;
  }
  t.strategy = m.strategy;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename MakeTask>
void run_grid(const ProtocolConfig& c, ExperimentReport& report, const std::string& task_name,
              const std::vector<std::string>& settings, const std::vector<std::string>& variants, MakeTask&& make_task,
              std::ostream* log) {
  const auto seeds = run_seeds(c);
  std::map<std::pair<std::string, std::string>, CellResult> cells;
  for (const auto& s : settings) {
    for (const auto& v : variants) cells[{s, v}] = CellResult{task_name, s, v, {}, 0.0, 0.0, {}};
  }
  for (std::size_t si = 0; si < settings.size(); ++si) {
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      TaskData task;
      try {
        task = make_task(si, seeds[k]);
      } catch (const std::exception& e) {
        for (const auto& v : variants) {
          cells[{settings[si], v}].failures.push_back("seed " + std::to_string(k) + ": " + e.what());
        }
        continue;
      }
      for (const auto& v : variants) {
        auto& cell = cells[{settings[si], v}];
        const auto t0 = Clock::now();
        try {
          auto mc = c.model;
          auto tc = c.train;
          configure_variant(v, mc, tc);
          const auto r = run_once(task, mc, tc, seeds[k]);
          cell.nd.push_back(r.test_nd);
          if (log) {
            *log << task_name << ' ' << settings[si] << ' ' << v << " seed " << (k + 1) << '/' << seeds.size()
                 << ": test ND " << std::fixed << std::setprecision(4) << r.test_nd << " (val "
                 << r.best_validation_nd << ", " << r.steps << " steps, " << std::setprecision(1)
                 << seconds_since(t0) << " s)" << std::endl;
          }
        } catch (const std::exception& e) {
          cell.failures.push_back("seed " + std::to_string(k) + ": " + e.what());
          if (log) *log << task_name << ' ' << settings[si] << ' ' << v << " seed " << (k + 1) << " failed: " << e.what() << std::endl;
        }
      }
    }
  }
  for (const auto& s : settings) {
    for (const auto& v : variants) {
      auto& cell = cells[{s, v}];
      summarize(cell);
      report.cells.push_back(std::move(cell));
    }
  }
}

ExperimentReport start_report(Protocol p, const ProtocolConfig& c) {
  c.validate();
  ExperimentReport r;
  r.protocol = to_string(p);
  r.config = to_json(c);
  return r;
}

}  // namespace

ExperimentReport run_cold_start(const ProtocolConfig& c, std::ostream* log) {
  const auto t0 = Clock::now();
  auto report = start_report(Protocol::cold_start, c);
  std::vector<std::string> settings;
  for (Index T : c.cold_start_histories) settings.push_back("T=" + std::to_string(T));
  run_grid(c, report, "cold-start", settings, {"AttF", "DAF"},
           [&](std::size_t i, std::uint64_t seed) { return make_cold_start_task(c, c.cold_start_histories[i], seed); },
           log);
  report.runtime_seconds = seconds_since(t0);
  return report;
}

ExperimentReport run_few_shot(const ProtocolConfig& c, std::ostream* log) {
  const auto t0 = Clock::now();
  auto report = start_report(Protocol::few_shot, c);
  std::vector<std::string> settings;
  for (Index n : c.few_shot_counts) settings.push_back("N=" + std::to_string(n));
  run_grid(c, report, "few-shot", settings, {"AttF", "DAF"},
           [&](std::size_t i, std::uint64_t seed) { return make_few_shot_task(c, c.few_shot_counts[i], seed); }, log);
  report.runtime_seconds = seconds_since(t0);
  return report;
}

ExperimentReport run_ablations(const ProtocolConfig& c, std::ostream* log) {
  const auto t0 = Clock::now();
  auto report = start_report(Protocol::ablation, c);
  const std::vector<std::string> settings{"N=" + std::to_string(c.ablation_count)};
  run_grid(c, report, "ablation", settings, c.ablation_variants,
           [&](std::size_t, std::uint64_t seed) { return make_few_shot_task(c, c.ablation_count, seed); }, log);
  report.runtime_seconds = seconds_since(t0);
  return report;
}

ExperimentReport run_protocol(Protocol p, const ProtocolConfig& c, std::ostream* log) {
  switch (p) {
    case Protocol::cold_start: return run_cold_start(c, log);
    case Protocol::few_shot: return run_few_shot(c, log);
    case Protocol::ablation: return run_ablations(c, log);
  }
  return run_few_shot(c, log);
}

}  // namespace daf::eval
