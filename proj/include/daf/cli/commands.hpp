#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "daf/cli/config.hpp"
#include "daf/data/synthetic.hpp"
#include "daf/eval/experiment.hpp"
#include "daf/training/train.hpp"

namespace daf::cli {

namespace fs = std::filesystem;
using num::Index;

enum ExitCode : int { kOk = 0, kInternal = 1, kInputError = 2, kStateMismatch = 3 };

/// Hex SHA-1 of "blob <size>\0<bytes>", the hash git gives a file's contents.
std::string git_blob_hash(const std::string& bytes);
std::string git_blob_hash_file(const fs::path& path);

struct RunManifest {
  std::string command;
  fs::path config_path;
  std::string resolved_config;
  // Input file -> git blob hash.
  std::vector<std::pair<std::string, std::string>> inputs;
  fs::path output_dir;
  std::string started_at;
  std::string finished_at;
};

nlohmann::json to_json(const RunManifest& m);
// UTC, ISO 8601.
std::string utc_timestamp();

/// Generation spec: a [generate] section with the root seed and one section
/// per domain ([source], [target]) holding the signal distribution.
struct GenerateSpec {
  std::uint64_t seed = 0;
  data::SyntheticSpec source;
  data::SyntheticSpec target;
};

GenerateSpec read_generate_spec(ConfigFile& file);
std::string format_generate_spec(const GenerateSpec& spec);

/// Everything train and eval need: where the data lives, how it is windowed
/// and split, the model and the optimizer settings.
struct DataSection {
  fs::path source;  // empty for single-domain runs
  fs::path target;
  Index source_history = 144;
  Index history = 144;
  Index horizon = 18;
  data::CovariateKind covariates = data::CovariateKind::positional;
  Index stride = 1;
  std::vector<double> source_fractions{0.8, 0.1, 0.1};
  std::vector<double> target_fractions{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

struct RunConfig {
  DataSection data;
  model::ModelConfig model;
  training::TrainConfig train;
  // Root of every random stream: data splits, initialization and shuffling.
  std::uint64_t seed = 0;
  std::string eval_split = "test";
  Index eval_batch_size = 256;

  void validate() const;
};

/// Reads a run config; relative data paths resolve against `base_dir`.
RunConfig read_run_config(ConfigFile& file, const fs::path& base_dir);
RunConfig load_run_config(const fs::path& path);
// Absolute paths, every key explicit; re-reading gives the same RunConfig.
std::string format_run_config(const RunConfig& c);

/// "full", "no-q-share", "no-k-share", "v-share", "attf" or "no-adv".
void apply_strategy(RunConfig& c, const std::string& name);

/// Source train windows plus the three target splits, as the config and
/// seed dictate.
struct RunData {
  std::vector<data::SeriesWindow> source_train;
  data::DatasetSplit target;
  std::vector<data::SeriesWindow> source_eval;
};

RunData load_run_data(const RunConfig& c, const std::string& source_eval_split = "test");

nlohmann::json to_json(const model::ModelConfig& m);

/// Protocol config from defaults for the scale plus an optional override file
/// with [experiment], [model] and [train] sections.
eval::ProtocolConfig read_protocol_config(ConfigFile* file, eval::RunScale scale);

struct GenerateArgs {
  fs::path spec;
  fs::path out;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  fs::path config;
  fs::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<double> lambda;
};

struct EvalArgs {
  fs::path checkpoint;
  fs::path config;
  fs::path out;  // defaults to the checkpoint's directory
  std::string split;  // overrides [eval] split when set
  fs::path dump_attention;
  fs::path dump_qk;
  Index dump_windows = 1;
};

struct ExperimentArgs {
  std::string protocol;
  std::string scale = "desk";
  std::optional<std::uint64_t> seed;
  fs::path out;
  fs::path config;
};

void cmd_generate(const GenerateArgs& a, std::ostream& log);
void cmd_train(const TrainArgs& a, std::ostream& log);
nlohmann::json cmd_eval(const EvalArgs& a, std::ostream& log);
// Returns the report; callers decide the exit code from report.ok().
eval::ExperimentReport cmd_experiment(const ExperimentArgs& a, std::ostream& log);

/// Parses argv, dispatches and maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace daf::cli
