#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "daf/data/synthetic.hpp"
#include "daf/training/train.hpp"

namespace daf::eval {

using num::Index;

enum class Protocol { cold_start, few_shot, ablation };
enum class RunScale { desk, large };

const char* to_string(Protocol p);
Protocol parse_protocol(const std::string& text);
const char* to_string(RunScale s);
RunScale parse_scale(const std::string& text);

/// Sizes, distributions and hyperparameters of the synthetic protocols.
///
/// Source series are 144 points long in every protocol. Cold-start targets have
/// period 36 and a short history; few-shot targets have T = 144 and few
/// training series, with separate validation and test sets.
struct ProtocolConfig {
  RunScale scale = RunScale::desk;
  Index horizon = 18;

  Index source_count = 1000;
  Index source_history = 144;
  double source_frequency_min = 2.0 / 144.0;
  double source_frequency_max = 10.0 / 144.0;

  Index cold_start_count = 500;
  std::vector<Index> cold_start_histories{36, 45, 54};
  double cold_start_frequency = 1.0 / 36.0;

  std::vector<Index> few_shot_counts{20, 50, 100};
  // Validation and test series in each few-shot cell, each.
  Index few_shot_holdout = 100;
  double few_shot_frequency_min = 4.0 / 144.0;
  double few_shot_frequency_max = 12.0 / 144.0;

  // The ablation battery runs on the few-shot task with this many series.
  Index ablation_count = 100;
  std::vector<std::string> ablation_variants{"full", "no-adv", "no-q-share", "no-k-share", "v-share"};

  double amplitude_min = 0.5;
  double amplitude_max = 5.0;
  double level_min = -3.0;
  double level_max = 3.0;
  double noise_std = 0.2;

  Index seeds = 3;
  std::uint64_t root_seed = 0;

  model::ModelConfig model;
  training::TrainConfig train;

  static ProtocolConfig desk();
  static ProtocolConfig large();
  void validate() const;
};

nlohmann::json to_json(const ProtocolConfig& c);

// Per-seed roots, derived from root_seed.
std::vector<std::uint64_t> run_seeds(const ProtocolConfig& c);

/// Windows of one synthetic task; the target keeps all three splits.
struct TaskData {
  std::vector<data::SeriesWindow> source_train;
  data::DatasetSplit target;
};

TaskData make_cold_start_task(const ProtocolConfig& c, Index target_history, std::uint64_t seed);
TaskData make_few_shot_task(const ProtocolConfig& c, Index target_count, std::uint64_t seed);

struct RunResult {
  double test_nd = 0.0;
  double best_validation_nd = 0.0;
  std::int64_t steps = 0;
};

/// Trains one model on the task and reports ND on the target test split.
RunResult run_once(const TaskData& task, model::ModelConfig model_config, training::TrainConfig train_config,
                   std::uint64_t seed);

/// One model (or ablation variant) in one setting, across seeds.
struct CellResult {
  std::string task;
  std::string setting;
  std::string model;
  std::vector<double> nd;
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

// Mean and sample standard deviation (n - 1); std is 0 for a single value.
void summarize(CellResult& cell);

struct ExperimentReport {
  std::string protocol;
  nlohmann::json config;
  std::vector<CellResult> cells;
  // Wall-clock seconds; kept out of the serialized report so reports are reproducible.
  double runtime_seconds = 0.0;

  bool ok() const;
  const CellResult* find(const std::string& setting, const std::string& model) const;
};

nlohmann::json to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const nlohmann::json& j);

/// Rows are settings, columns models, cells "mean±std".
std::string format_table(const ExperimentReport& r);

/// Models and ablation variants by name: "AttF", "DAF", or one of the ablation names.
void configure_variant(const std::string& name, model::ModelConfig& model_config,
                       training::TrainConfig& train_config);

ExperimentReport run_cold_start(const ProtocolConfig& c, std::ostream* log = nullptr);
ExperimentReport run_few_shot(const ProtocolConfig& c, std::ostream* log = nullptr);
ExperimentReport run_ablations(const ProtocolConfig& c, std::ostream* log = nullptr);
ExperimentReport run_protocol(Protocol p, const ProtocolConfig& c, std::ostream* log = nullptr);

}  // namespace daf::eval
