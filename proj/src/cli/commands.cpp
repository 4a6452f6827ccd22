#include "daf/cli/commands.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"

#include "daf/errors.hpp"
#include "daf/eval/metrics.hpp"
#include "daf/model/predict.hpp"
#include "daf/numerics/checkpoint.hpp"

namespace daf::cli {

using data::Domain;

std::string git_blob_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return os.str();
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path.string());
}

fs::path output_dir(const fs::path& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
  return out;
}

}  // namespace

std::string git_blob_hash_file(const fs::path& path) { return git_blob_hash(read_file(path)); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [path, hash] : m.inputs) inputs[path] = hash;
  return {{"command", m.command},
          {"config_path", m.config_path.string()},
          {"resolved_config", m.resolved_config},
          {"inputs", inputs},
          {"output_dir", m.output_dir.string()},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at}};
}

namespace {

data::SyntheticSpec read_signal(ConfigFile& f, const std::string& s) {
  data::SyntheticSpec d;
  d.count = f.get_int(s, "count", d.count);
  d.history = f.get_int(s, "history", d.history);
  d.horizon = f.get_int(s, "horizon", d.horizon);
  d.amplitude_min = f.get_double(s, "amplitude_min", d.amplitude_min);
  d.amplitude_max = f.get_double(s, "amplitude_max", d.amplitude_max);
  d.level_min = f.get_double(s, "level_min", d.level_min);
  d.level_max = f.get_double(s, "level_max", d.level_max);
  d.frequency_min = f.get_double(s, "frequency_min", 1.0 / static_cast<double>(d.history));
  d.frequency_max = f.get_double(s, "frequency_max", 20.0 / static_cast<double>(d.history));
  d.phase_min = f.get_double(s, "phase_min", d.phase_min);
  d.phase_max = f.get_double(s, "phase_max", d.phase_max);
  d.noise_std = f.get_double(s, "noise_std", d.noise_std);
  return d;
}

void format_signal(std::ostream& os, const std::string& name, const data::SyntheticSpec& d) {
  os << '[' << name << "]\n"
     << "count = " << format_value(std::int64_t{d.count}) << '\n'
     << "history = " << format_value(std::int64_t{d.history}) << '\n'
     << "horizon = " << format_value(std::int64_t{d.horizon}) << '\n'
     << "amplitude_min = " << format_value(d.amplitude_min) << '\n'
     << "amplitude_max = " << format_value(d.amplitude_max) << '\n'
     << "level_min = " << format_value(d.level_min) << '\n'
     << "level_max = " << format_value(d.level_max) << '\n'
     << "frequency_min = " << format_value(d.frequency_min) << '\n'
     << "frequency_max = " << format_value(d.frequency_max) << '\n'
     << "phase_min = " << format_value(d.phase_min) << '\n'
     << "phase_max = " << format_value(d.phase_max) << '\n'
     << "noise_std = " << format_value(d.noise_std) << '\n';
}

std::uint64_t as_seed(std::int64_t v) {
  if (v < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

GenerateSpec read_generate_spec(ConfigFile& f) {
  if (!f.has_section("target")) throw ConfigError("generation spec needs a [target] section");
  GenerateSpec g;
  g.seed = as_seed(f.get_int("generate", "seed", 0));
  g.target = read_signal(f, "target");
  if (f.has_section("source")) {
    g.source = read_signal(f, "source");
    if (g.source.count < 1) throw ConfigError("source.count must be at least 1");
  }
  f.check_all_used();
  g.source.seed = num::derive_seed(g.seed, "datagen/source");
  g.target.seed = num::derive_seed(g.seed, "datagen/target");
  return g;
}

std::string format_generate_spec(const GenerateSpec& g) {
  std::ostringstream os;
  os << "[generate]\nseed = " << format_value(static_cast<std::int64_t>(g.seed)) << "\n\n";
  if (g.source.count > 0) {
    format_signal(os, "source", g.source);
    os << '\n';
  }
  format_signal(os, "target", g.target);
  return os.str();
}

void cmd_generate(const GenerateArgs& a, std::ostream& log) {
  require_file(a.spec, "spec file");
  const auto started = utc_timestamp();
  auto file = ConfigFile::load(a.spec);
  auto spec = read_generate_spec(file);
  if (a.seed) {
    spec.seed = *a.seed;
    spec.source.seed = num::derive_seed(spec.seed, "datagen/source");
    spec.target.seed = num::derive_seed(spec.seed, "datagen/target");
  }
  if (spec.source.count > 0) spec.source.validate();
  spec.target.validate();

  const auto out = output_dir(a.out);
  if (spec.source.count > 0) {
    data::write_series_csv(out / "source.csv", data::generate_sinusoids(spec.source));
    log << "wrote " << spec.source.count << " source series to " << (out / "source.csv").string() << '\n';
  }
  data::write_series_csv(out / "target.csv", data::generate_sinusoids(spec.target));
  log << "wrote " << spec.target.count << " target series to " << (out / "target.csv").string() << '\n';

  RunManifest m;
  m.command = "generate";
  m.config_path = fs::absolute(a.spec);
  m.resolved_config = format_generate_spec(spec);
  m.inputs.emplace_back(m.config_path.string(), git_blob_hash_file(a.spec));
  m.output_dir = fs::absolute(out);
  m.started_at = started;
  m.finished_at = utc_timestamp();
  write_file(out / "spec.resolved.toml", m.resolved_config);
  write_file(out / "manifest.json", to_json(m).dump(2) + "\n");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (train.strategy != model.strategy) throw ConfigError("train and model strategies disagree");
  if (data.target.empty()) throw ConfigError("data.target is required");
  if (model.has_source() && data.source.empty()) {
    throw ConfigError(std::string("strategy ") + model::to_string(model.strategy) + " needs data.source");
  }
  if (data.history < model.min_history()) {
    throw ConfigError("data.history " + std::to_string(data.history) + " is shorter than the minimum " +
                      std::to_string(model.min_history()) + " for these kernels");
  }
  if (model.has_source() && data.source_history < model.min_history()) {
    throw ConfigError("data.source_history is shorter than the minimum for these kernels");
  }
  for (const auto* f : {&data.source_fractions, &data.target_fractions}) {
    if (f->size() != 3) throw ConfigError("split fractions need three entries (train, validation, test)");
  }
  if (eval_split != "train" && eval_split != "validation" && eval_split != "test") {
    throw ConfigError("eval.split must be train, validation or test");
  }
  if (eval_batch_size < 1) throw ConfigError("eval.batch_size must be positive");
}

namespace {

std::vector<Index> to_index(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }
std::vector<std::int64_t> to_int64(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

void read_model(ConfigFile& f, model::ModelConfig& m) {
  m.hidden = f.get_int("model", "hidden", m.hidden);
  m.mlp_layers = f.get_int("model", "mlp_layers", m.mlp_layers);
  m.kernel_sizes = to_index(f.get_int_list("model", "kernel_sizes", to_int64(m.kernel_sizes)));
  m.strategy = model::parse_strategy(f.get_string("model", "strategy", model::to_string(m.strategy)));
  m.disc_forecast_region = f.get_bool("model", "disc_forecast_region", m.disc_forecast_region);
}

void read_train(ConfigFile& f, training::TrainConfig& t) {
  t.lambda = f.get_double("train", "lambda", t.lambda);
  t.learning_rate = f.get_double("train", "learning_rate", t.learning_rate);
  t.epochs = f.get_int("train", "epochs", t.epochs);
  t.batch_size = f.get_int("train", "batch_size", t.batch_size);
  t.patience = f.get_int("train", "patience", t.patience);
  t.eval_every = f.get_int("train", "eval_every", t.eval_every);
  t.adversarial = f.get_bool("train", "adversarial", t.adversarial);
  t.max_iterations = f.get_int("train", "max_iterations", t.max_iterations);
}

std::string strategy_text(model::SharingStrategy s) { return model::to_string(s); }

}  // namespace

RunConfig read_run_config(ConfigFile& f, const fs::path& base_dir) {
  RunConfig c;
  auto path = [&](const std::string& key) -> fs::path {
    const auto text = f.get_string("data", key, "");
    if (text.empty()) return {};
    const fs::path p(text);
    return p.is_absolute() ? p : fs::absolute(base_dir / p).lexically_normal();
  };
  c.data.source = path("source");
  c.data.target = path("target");
  c.data.source_history = f.get_int("data", "source_history", c.data.source_history);
  c.data.history = f.get_int("data", "history", c.data.history);
  c.data.horizon = f.get_int("data", "horizon", c.data.horizon);
  c.data.covariates = data::parse_covariate_kind(f.get_string("data", "covariates", data::to_string(c.data.covariates)));
  c.data.stride = f.get_int("data", "stride", c.data.stride);
  c.data.source_fractions = f.get_double_list("data", "source_fractions", c.data.source_fractions);
  c.data.target_fractions = f.get_double_list("data", "target_fractions", c.data.target_fractions);

  read_model(f, c.model);
  c.model.covariate_dim = data::covariate_dim(c.data.covariates);
  read_train(f, c.train);
  c.train.strategy = c.model.strategy;
  if (c.model.strategy == model::SharingStrategy::attf) c.train.adversarial = false;
  c.seed = as_seed(f.get_int("train", "seed", 0));

  c.eval_split = f.get_string("eval", "split", c.eval_split);
  c.eval_batch_size = f.get_int("eval", "batch_size", c.eval_batch_size);
  f.check_all_used();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  require_file(path, "config file");
  auto file = ConfigFile::load(path);
  return read_run_config(file, fs::absolute(path).parent_path());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[data]\n";
  if (!c.data.source.empty()) os << "source = " << format_value(c.data.source.string()) << '\n';
  os << "target = " << format_value(c.data.target.string()) << '\n'
     << "source_history = " << format_value(std::int64_t{c.data.source_history}) << '\n'
     << "history = " << format_value(std::int64_t{c.data.history}) << '\n'
     << "horizon = " << format_value(std::int64_t{c.data.horizon}) << '\n'
     << "covariates = " << format_value(std::string(data::to_string(c.data.covariates))) << '\n'
     << "stride = " << format_value(std::int64_t{c.data.stride}) << '\n'
     << "source_fractions = " << format_value(c.data.source_fractions) << '\n'
     << "target_fractions = " << format_value(c.data.target_fractions) << "\n\n";
  const auto& m = c.model;
  os << "[model]\n"
     << "hidden = " << format_value(std::int64_t{m.hidden}) << '\n'
     << "mlp_layers = " << format_value(std::int64_t{m.mlp_layers}) << '\n'
     << "kernel_sizes = " << format_value(to_int64(m.kernel_sizes)) << '\n'
     << "strategy = " << format_value(strategy_text(m.strategy)) << '\n'
     << "disc_forecast_region = " << format_value(m.disc_forecast_region) << "\n\n";
  const auto& t = c.train;
  os << "[train]\n"
     << "seed = " << format_value(static_cast<std::int64_t>(c.seed)) << '\n'
     << "lambda = " << format_value(t.lambda) << '\n'
     << "learning_rate = " << format_value(t.learning_rate) << '\n'
     << "epochs = " << format_value(std::int64_t{t.epochs}) << '\n'
     << "batch_size = " << format_value(std::int64_t{t.batch_size}) << '\n'
     << "patience = " << format_value(std::int64_t{t.patience}) << '\n'
     << "eval_every = " << format_value(std::int64_t{t.eval_every}) << '\n'
     << "adversarial = " << format_value(t.adversarial) << '\n'
     << "max_iterations = " << format_value(std::int64_t{t.max_iterations}) << "\n\n";
  os << "[eval]\n"
     << "split = " << format_value(c.eval_split) << '\n'
     << "batch_size = " << format_value(std::int64_t{c.eval_batch_size}) << '\n';
  return os.str();
}

void apply_strategy(RunConfig& c, const std::string& name) {
  if (name == "no-adv") {
    c.model.strategy = model::SharingStrategy::full;
    c.train.adversarial = false;
  } else {
    c.model.strategy = model::parse_strategy(name);
    if (c.model.strategy == model::SharingStrategy::attf) c.train.adversarial = false;
  }
  c.train.strategy = c.model.strategy;
}

namespace {

data::DatasetSplit load_split(const fs::path& csv, Index history, const RunConfig& c, Domain domain,
                              const std::vector<double>& fractions, const std::string& label) {
  require_file(csv, std::string(data::to_string(domain)) + " data");
  auto windows = data::make_windows(data::read_series_csv(csv), history, c.data.horizon, c.data.covariates, domain,
                                    c.data.stride);
  return data::split_dataset(std::move(windows.windows), fractions[0], fractions[1], fractions[2],
                             num::derive_seed(c.seed, label));
}

std::vector<data::SeriesWindow>& pick(data::DatasetSplit& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  return s.test;
}

}  // namespace

RunData load_run_data(const RunConfig& c, const std::string& source_eval_split) {
  RunData d;
  d.target = load_split(c.data.target, c.data.history, c, Domain::target, c.data.target_fractions, "target-split");
  if (!c.data.source.empty()) {
    auto s = load_split(c.data.source, c.data.source_history, c, Domain::source, c.data.source_fractions,
                        "source-split");
    d.source_eval = std::move(pick(s, source_eval_split));
    d.source_train = std::move(s.train);
  }
  return d;
}

nlohmann::json to_json(const model::ModelConfig& m) {
  return {{"hidden", m.hidden},
          {"mlp_layers", m.mlp_layers},
          {"kernel_sizes", m.kernel_sizes},
          {"covariate_dim", m.covariate_dim},
          {"strategy", model::to_string(m.strategy)},
          {"disc_forecast_region", m.disc_forecast_region}};
}

void cmd_train(const TrainArgs& a, std::ostream& log) {
  const auto started = utc_timestamp();
  auto c = load_run_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.strategy) apply_strategy(c, *a.strategy);
  if (a.lambda) c.train.lambda = *a.lambda;
  c.validate();
  const auto out = output_dir(a.out);

  auto d = load_run_data(c);
  model::DafModel m(c.model, num::derive_seed(c.seed, "init"));
  auto tc = c.train;
  tc.seed = num::derive_seed(c.seed, "train");
  if (!c.model.has_source()) d.source_train.clear();
  log << "training " << model::to_string(c.model.strategy) << " on " << d.target.train.size() << " target and "
      << d.source_train.size() << " source windows\n";
  const auto fit = training::fit(m, {d.source_train, d.target.train, d.target.validation}, tc);
  log << "best validation ND " << std::setprecision(6) << fit.best_validation_nd << " at step " << fit.best_step
      << " of " << fit.steps << '\n';

  const nlohmann::json meta{{"model", to_json(c.model)},
                            {"best_validation_nd", fit.best_validation_nd},
                            {"best_step", fit.best_step},
                            {"steps", fit.steps},
                            {"seed", c.seed}};
  num::save_checkpoint(out / "checkpoint.ckpt", fit.best, meta);
  {
    std::ofstream h(out / "history.jsonl");
    training::write_history(h, fit.history);
    if (!h) throw std::runtime_error("cannot write history");
  }
  RunManifest man;
  man.command = "train";
  man.config_path = fs::absolute(a.config);
  man.resolved_config = format_run_config(c);
  man.inputs.emplace_back(man.config_path.string(), git_blob_hash_file(a.config));
  if (!c.data.source.empty()) man.inputs.emplace_back(c.data.source.string(), git_blob_hash_file(c.data.source));
  man.inputs.emplace_back(c.data.target.string(), git_blob_hash_file(c.data.target));
  man.output_dir = fs::absolute(out);
  man.started_at = started;
  man.finished_at = utc_timestamp();
  write_file(out / "config.resolved.toml", man.resolved_config);
  write_file(out / "manifest.json", to_json(man).dump(2) + "\n");
}

namespace {

std::vector<model::AttentionTrace> traces_of(model::DafModel& m, std::span<const data::SeriesWindow> raw,
                                             Domain domain) {
  std::vector<data::SeriesWindow> scaled;
  for (const auto& w : raw) scaled.push_back(data::scale_window(w));
  const auto batch = model::make_batch(scaled);
  num::Tape tape(false);
  const auto g = model::bind(tape, m.generator(domain));
  auto out = model::generator_forward(tape, batch, g, m.config(), {.reconstruct = true, .forecast_qk = true,
                                                                   .record_trace = true});
  return std::move(out.traces);
}

void dump_qk(std::ostream& os, Domain domain, const std::vector<model::AttentionTrace>& traces, bool header) {
  if (traces.empty()) return;
  const Index d = traces.front().queries.rows();
  if (header) {
    os << "domain,series_id,position";
    for (Index i = 0; i < d; ++i) os << ",q" << i;
    for (Index i = 0; i < d; ++i) os << ",k" << i;
    os << '\n';
  }
  os << std::setprecision(17);
  for (const auto& t : traces) {
    for (Index p = 0; p < t.queries.cols(); ++p) {
      os << data::to_string(domain) << ',' << t.series_id << ',' << (p + 1);
      for (Index i = 0; i < d; ++i) os << ',' << t.queries(i, p);
      for (Index i = 0; i < d; ++i) os << ',' << t.keys(i, p);
      os << '\n';
    }
  }
}

void dump_attention(std::ostream& os, Domain domain, const std::vector<model::AttentionTrace>& traces, Index history,
                    bool header) {
  if (header) os << "domain,series_id,mode,position,neighbor,value_position,weight\n";
  os << std::setprecision(17);
  for (const auto& t : traces) {
    for (const auto& r : t.rows) {
      const char* mode = r.position <= history ? "interpolation" : "extrapolation";
      for (std::size_t j = 0; j < r.neighbors.size(); ++j) {
        os << data::to_string(domain) << ',' << t.series_id << ',' << mode << ',' << r.position << ','
           << r.neighbors[j] << ',' << r.value_positions[j] << ',' << r.weights(static_cast<Index>(j)) << '\n';
      }
    }
  }
}

}  // namespace

nlohmann::json cmd_eval(const EvalArgs& a, std::ostream& log) {
  require_file(a.checkpoint, "checkpoint");
  auto c = load_run_config(a.config);
  if (!a.split.empty()) c.eval_split = a.split;
  c.validate();

  auto ckpt = num::load_checkpoint(a.checkpoint);
  if (ckpt.metadata.contains("model") && ckpt.metadata["model"] != to_json(c.model)) {
    throw StateMismatchError("checkpoint was trained with model " + ckpt.metadata["model"].dump() +
                             " but the config describes " + to_json(c.model).dump());
  }
  model::DafModel m(c.model, std::move(ckpt.params));

  auto d = load_run_data(c, c.eval_split);
  const auto& windows = pick(d.target, c.eval_split);
  const auto forecasts = model::predict(m, windows, Domain::target, c.eval_batch_size);
  const auto nd = eval::nd_metric(windows, forecasts);
  log << c.eval_split << " ND " << std::setprecision(6) << nd.nd << " over " << windows.size() << " windows\n";

  const auto out = output_dir(a.out.empty() ? fs::absolute(a.checkpoint).parent_path() : a.out);
  nlohmann::json metrics{{"split", c.eval_split},
                         {"nd", nd.nd},
                         {"numerator", nd.numerator()},
                         {"denominator", nd.denominator()},
                         {"windows", windows.size()},
                         {"strategy", model::to_string(c.model.strategy)},
                         {"checkpoint", fs::absolute(a.checkpoint).string()},
                         {"checkpoint_hash", git_blob_hash_file(a.checkpoint)}};
  write_file(out / "metrics.json", metrics.dump(2) + "\n");

  if (!a.dump_qk.empty() || !a.dump_attention.empty()) {
    if (a.dump_windows < 1) throw ConfigError("--dump-windows must be positive");
    struct Part {
      Domain domain;
      std::vector<model::AttentionTrace> traces;
      Index history;
    };
    std::vector<Part> parts;
    auto take = [&](const std::vector<data::SeriesWindow>& w) {
      const auto n = std::min<std::size_t>(w.size(), static_cast<std::size_t>(a.dump_windows));
      return std::span<const data::SeriesWindow>(w.data(), n);
    };
    if (c.model.has_source() && !d.source_eval.empty()) {
      parts.push_back({Domain::source, traces_of(m, take(d.source_eval), Domain::source), c.data.source_history});
    }
    parts.push_back({Domain::target, traces_of(m, take(windows), Domain::target), c.data.history});
    if (!a.dump_qk.empty()) {
      std::ofstream os(a.dump_qk);
      for (std::size_t i = 0; i < parts.size(); ++i) dump_qk(os, parts[i].domain, parts[i].traces, i == 0);
      if (!os) throw std::runtime_error("cannot write " + a.dump_qk.string());
    }
    if (!a.dump_attention.empty()) {
      std::ofstream os(a.dump_attention);
      for (std::size_t i = 0; i < parts.size(); ++i) {
        dump_attention(os, parts[i].domain, parts[i].traces, parts[i].history, i == 0);
      }
      if (!os) throw std::runtime_error("cannot write " + a.dump_attention.string());
    }
  }
  return metrics;
}

eval::ProtocolConfig read_protocol_config(ConfigFile* f, eval::RunScale scale) {
  auto c = scale == eval::RunScale::large ? eval::ProtocolConfig::large() : eval::ProtocolConfig::desk();
  if (f == nullptr) return c;
  const std::string s = "experiment";
  c.horizon = f->get_int(s, "horizon", c.horizon);
  c.source_count = f->get_int(s, "source_count", c.source_count);
  c.source_history = f->get_int(s, "source_history", c.source_history);
  c.source_frequency_min = f->get_double(s, "source_frequency_min", c.source_frequency_min);
  c.source_frequency_max = f->get_double(s, "source_frequency_max", c.source_frequency_max);
  c.cold_start_count = f->get_int(s, "cold_start_count", c.cold_start_count);
  c.cold_start_histories = to_index(f->get_int_list(s, "cold_start_histories", to_int64(c.cold_start_histories)));
  c.cold_start_frequency = f->get_double(s, "cold_start_frequency", c.cold_start_frequency);
  c.few_shot_counts = to_index(f->get_int_list(s, "few_shot_counts", to_int64(c.few_shot_counts)));
  c.few_shot_holdout = f->get_int(s, "few_shot_holdout", c.few_shot_holdout);
  c.few_shot_frequency_min = f->get_double(s, "few_shot_frequency_min", c.few_shot_frequency_min);
  c.few_shot_frequency_max = f->get_double(s, "few_shot_frequency_max", c.few_shot_frequency_max);
  c.ablation_count = f->get_int(s, "ablation_count", c.ablation_count);
  c.ablation_variants = f->get_string_list(s, "ablation_variants", c.ablation_variants);
  c.amplitude_min = f->get_double(s, "amplitude_min", c.amplitude_min);
  c.amplitude_max = f->get_double(s, "amplitude_max", c.amplitude_max);
  c.level_min = f->get_double(s, "level_min", c.level_min);
  c.level_max = f->get_double(s, "level_max", c.level_max);
  c.noise_std = f->get_double(s, "noise_std", c.noise_std);
  c.seeds = f->get_int(s, "seeds", c.seeds);
  c.root_seed = as_seed(f->get_int(s, "seed", static_cast<std::int64_t>(c.root_seed)));
  read_model(*f, c.model);
  read_train(*f, c.train);
  f->check_all_used();
  return c;
}

eval::ExperimentReport cmd_experiment(const ExperimentArgs& a, std::ostream& log) {
  const auto started = utc_timestamp();
  const auto protocol = eval::parse_protocol(a.protocol);
  const auto scale = eval::parse_scale(a.scale);
  std::optional<ConfigFile> file;
  if (!a.config.empty()) {
    require_file(a.config, "config file");
    file = ConfigFile::load(a.config);
  }
  auto c = read_protocol_config(file ? &*file : nullptr, scale);
  if (a.seed) c.root_seed = *a.seed;
  c.validate();
  const auto out = output_dir(a.out);

  auto report = eval::run_protocol(protocol, c, &log);
  write_file(out / "report.json", to_json(report).dump(2) + "\n");
  write_file(out / "report.txt", eval::format_table(report));
  write_file(out / "timing.json", nlohmann::json{{"runtime_seconds", report.runtime_seconds}}.dump(2) + "\n");

  RunManifest man;
  man.command = std::string("experiment ") + eval::to_string(protocol);
  if (!a.config.empty()) {
    man.config_path = fs::absolute(a.config);
    man.inputs.emplace_back(man.config_path.string(), git_blob_hash_file(a.config));
  }
  man.resolved_config = to_json(c).dump();
  man.output_dir = fs::absolute(out);
  man.started_at = started;
  man.finished_at = utc_timestamp();
  write_file(out / "manifest.json", to_json(man).dump(2) + "\n");
  log << eval::format_table(report);
  return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-adaptive attention forecaster"};
  app.require_subcommand(1);

  GenerateArgs ga;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("generate", "Write synthetic source/target series as CSV");
  gen->add_option("--spec,--config", ga.spec, "Generation spec")->required();
  gen->add_option("--out", ga.out, "Output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Root seed (overrides the spec)");

  TrainArgs ta;
  std::string strategy;
  double lambda = 0.0;
  auto* train = app.add_subcommand("train", "Train a model and write its best checkpoint");
  train->add_option("--config", ta.config, "Run config")->required();
  train->add_option("--out", ta.out, "Output directory")->required();
  auto* train_seed = train->add_option("--seed", seed, "Root seed (overrides the config)");
  auto* train_strategy =
      train->add_option("--strategy", strategy, "full, no-q-share, no-k-share, v-share, attf or no-adv");
  auto* train_lambda = train->add_option("--lambda", lambda, "Adversarial weight");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a target split");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--config", ea.config, "Run config the checkpoint was trained with")->required();
  ev->add_option("--out", ea.out, "Output directory (default: next to the checkpoint)");
  ev->add_option("--split", ea.split, "train, validation or test");
  ev->add_option("--dump-attention", ea.dump_attention, "CSV of attention weights");
  ev->add_option("--dump-qk", ea.dump_qk, "CSV of queries and keys");
  ev->add_option("--dump-windows", ea.dump_windows, "Windows per domain in the dumps");

  ExperimentArgs xa;
  auto* ex = app.add_subcommand("experiment", "Run a synthetic protocol across seeds");
  ex->add_option("protocol", xa.protocol, "cold-start, few-shot or ablation")->required();
  ex->add_option("--scale", xa.scale, "desk or large");
  auto* ex_seed = ex->add_option("--seed", seed, "Root seed");
  ex->add_option("--out", xa.out, "Output directory")->required();
  ex->add_option("--config", xa.config, "Overrides for the protocol defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (gen->parsed()) {
      if (gen_seed->count() > 0) ga.seed = seed;
      cmd_generate(ga, out);
    } else if (train->parsed()) {
      if (train_seed->count() > 0) ta.seed = seed;
      if (train_strategy->count() > 0) ta.strategy = strategy;
      if (train_lambda->count() > 0) ta.lambda = lambda;
      cmd_train(ta, out);
    } else if (ev->parsed()) {
      cmd_eval(ea, out);
    } else if (ex->parsed()) {
      if (ex_seed->count() > 0) xa.seed = seed;
      const auto report = cmd_experiment(xa, out);
      if (!report.ok()) {
        err << "error: some cells failed; see report.json\n";
        return kInternal;
      }
    }
    return kOk;
  } catch (const StateMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kStateMismatch;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const InputTooShortError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const EmptyDatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace daf::cli
