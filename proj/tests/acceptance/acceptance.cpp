// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   daf_acceptance [--only 1,2,5] [--work DIR]
//
// Criteria 5, 6, 7 and 9 drive the `daf` command line in-process and take
// well over an hour on one core; the rest finish in seconds.

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "daf/cli/commands.hpp"
#include "daf/eval/metrics.hpp"
#include "daf/numerics/checkpoint.hpp"
#include "support/gradcheck.hpp"
#include "support/oracle.hpp"

using namespace daf;
namespace fs = std::filesystem;
using num::Index;
using num::Matrix;
using num::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string fixed(double v, int decimals = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

bool same_bytes(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

model::ModelConfig tiny_model(model::SharingStrategy strategy = model::SharingStrategy::full) {
  model::ModelConfig c;
  c.hidden = 4;
  c.kernel_sizes = {3, 5};
  c.strategy = strategy;
  return c;
}

std::vector<data::SeriesWindow> synthetic_windows(Index count, Index T, Index tau, std::uint64_t seed,
                                                  data::Domain domain) {
  data::SyntheticSpec s;
  s.count = count;
  s.history = T;
  s.horizon = tau;
  s.frequency_min = 1.0 / static_cast<double>(T);
  s.frequency_max = 5.0 / static_cast<double>(T);
  s.seed = seed;
  return data::make_windows(data::generate_sinusoids(s), T, tau, data::CovariateKind::positional, domain).windows;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  num::Rng rng(20240601);
  double worst = 0.0;
  std::string worst_op;
  std::size_t ops = 0;
  for (const auto& op : testing::op_catalogue()) {
    ++ops;
    for (int i = 0; i < 100; ++i) {
      const double e = testing::gradient_error(op.make(rng), rng);
      if (e > worst) {
        worst = e;
        worst_op = op.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0, std::to_string(ops) + " ops x 100 instances, worst relative error " +
                                           fmt(worst) + " (" + worst_op + ") < 1e-4, " + fixed(secs, 1) +
                                           " s < 60 s"};
}

// 2 ------------------------------------------------------------------------

Outcome attention_oracle() {
  auto rng = num::make_rng(2, "acceptance/oracle");
  double worst = 0.0;
  bool pairing = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = testing::pick(rng, 1, 4), h = testing::pick(rng, 1, 4), T = testing::pick(rng, 5, 8);
    const Matrix Q = testing::uniform(rng, d, T, -2, 2), K = testing::uniform(rng, d, T, -2, 2);
    const Matrix V = testing::uniform(rng, h, T);
    num::ParamStore store;
    auto& w = store.add("w", {h, h});
    auto& b = store.add("b", {h});
    w.value.matrix() = testing::uniform(rng, h, h);
    b.value.matrix() = testing::uniform(rng, h, 1);
    num::Tape tape(false);
    const std::vector<num::AffineLayer> out{{tape.parameter(w), tape.parameter(b)}};
    const testing::Affine affine{w.value.matrix(), b.value.matrix().col(0)};

    const Matrix interp =
        model::interpolate(tape.constant(Q), tape.constant(K), tape.constant(V), T, out).value();
    worst = std::max(worst, (interp - testing::brute_interpolate(Q, K, V, affine)).cwiseAbs().maxCoeff());

    Matrix alpha;
    const Matrix extra =
        model::extrapolate(tape.constant(Q), tape.constant(K), tape.constant(V), T, 3, out, &alpha).value();
    std::vector<double> brute_alpha;
    worst = std::max(worst, (extra.col(0) - testing::brute_extrapolate(Q, K, V, 3, affine, &brute_alpha))
                                .cwiseAbs()
                                .maxCoeff());
    for (std::size_t j = 0; j < brute_alpha.size(); ++j) {
      worst = std::max(worst, std::abs(alpha(static_cast<Index>(j), 0) - brute_alpha[j]));
    }

    const auto idx = model::extrapolation_indices(T, 3);
    const auto rule = testing::extrapolation_rule(static_cast<int>(T), 3);
    pairing = pairing && idx.value_of(T - 2) == T && rule.last_key == T - 2 && rule.last_key + rule.offset == T &&
              idx.query == rule.query && idx.first_key == rule.first_key && idx.last_key == rule.last_key;
  }
  return {worst < 1e-10 && pairing, "1000 instances, max abs error " + fmt(worst) +
                                        " < 1e-10; key T-2 -> value T for s=3: " + (pairing ? "yes" : "NO")};
}

// 3 ------------------------------------------------------------------------

Outcome masking() {
  auto rng = num::make_rng(3, "acceptance/masking");
  const std::vector<std::vector<Index>> kernel_sets{{3}, {5}, {1, 3}, {3, 5}, {3, 7}, {1, 5, 7}};
  std::size_t rows = 0;
  double worst_sum = 0.0;
  bool excluded_zero = true, in_range = true, neighborhoods = true;
  for (int trial = 0; trial < 200; ++trial) {
    model::ModelConfig cfg;
    cfg.kernel_sizes = kernel_sets[static_cast<std::size_t>(testing::pick(rng, 0, 5))];
    cfg.hidden = static_cast<Index>(cfg.kernel_sizes.size()) * testing::pick(rng, 1, 3);
    cfg.covariate_dim = testing::pick(rng, 0, 2);
    cfg.strategy = model::SharingStrategy::attf;
    model::DafModel m(cfg, static_cast<std::uint64_t>(trial));
    const Index T = cfg.min_history() + testing::pick(rng, 0, 6), tau = testing::pick(rng, 1, 4);
    const Index B = testing::pick(rng, 1, 3);
    std::vector<data::SeriesWindow> windows;
    for (Index b = 0; b < B; ++b) {
      data::SeriesWindow w;
      w.x = testing::uniform(rng, T, 1, -3, 3);
      w.y = testing::uniform(rng, tau, 1, -3, 3);
      w.covariates = testing::uniform(rng, cfg.covariate_dim, T + tau, -0.5, 0.5);
      windows.push_back(data::scale_window(w));
    }
    num::Tape tape(false);
    model::ForwardOptions opt;
    opt.record_trace = true;
    const auto out = model::generator_forward(tape, model::make_batch(std::span<const data::SeriesWindow>(windows)),
                                              model::bind(tape, m.generator(data::Domain::target)), cfg, opt);
    const Index s = cfg.max_kernel(), half = cfg.half_width();
    for (const auto& tr : out.traces) {
      for (const auto& row : tr.rows) {
        ++rows;
        worst_sum = std::max(worst_sum, std::abs(row.weights.sum() - 1.0));
        excluded_zero = excluded_zero && row.weights.minCoeff() >= 0.0;
        if (row.position <= T) {
          neighborhoods = neighborhoods && row.neighbors.size() == static_cast<std::size_t>(T - 1) &&
                          std::find(row.neighbors.begin(), row.neighbors.end(), row.position) == row.neighbors.end();
        } else {
          const Index L = row.position - 1;
          neighborhoods = neighborhoods && row.neighbors.front() == s && row.neighbors.back() == L - half - 1;
          for (Index v : row.value_positions) in_range = in_range && v >= 1 && v <= L;
        }
      }
    }

    // Full weight matrices: the self weight is exactly zero.
    const Index d = testing::pick(rng, 1, 4), L = T;
    const Matrix Q = testing::uniform(rng, d, L), K = testing::uniform(rng, d, L), V = testing::uniform(rng, 2, L);
    num::ParamStore store;
    store.add("w", {2, 2}).value.matrix() = testing::uniform(rng, 2, 2);
    store.add("b", {2});
    const std::vector<num::AffineLayer> affine{{tape.parameter(store.at("w")), tape.parameter(store.at("b"))}};
    std::vector<Matrix> weights;
    model::interpolate(tape.constant(Q), tape.constant(K), tape.constant(V), L, affine, &weights);
    excluded_zero = excluded_zero && weights.front().diagonal().cwiseAbs().maxCoeff() == 0.0;
    worst_sum = std::max(worst_sum, (weights.front().rowwise().sum().array() - 1.0).abs().maxCoeff());

    // Keys and values outside the extrapolation neighborhood cannot move the output.
    const auto idx = model::extrapolation_indices(L, s);
    const Matrix base = model::extrapolate(tape.constant(Q), tape.constant(K), tape.constant(V), L, s, affine).value();
    Matrix K2 = K, V2 = V;
    for (Index t = 1; t <= L; ++t) {
      if (t < idx.first_key || t > idx.last_key) K2.col(t - 1).setConstant(7.0);
      if (t < idx.value_of(idx.first_key) || t > idx.value_of(idx.last_key)) V2.col(t - 1).setConstant(-7.0);
    }
    const Matrix moved = model::extrapolate(tape.constant(Q), tape.constant(K2), tape.constant(V2), L, s, affine).value();
    excluded_zero = excluded_zero && same_bytes(base, moved);
  }
  const bool pass = worst_sum < 1e-9 && excluded_zero && in_range && neighborhoods;
  return {pass, std::to_string(rows) + " trace rows over 200 random shapes; max |sum - 1| " + fmt(worst_sum) +
                    " < 1e-9; excluded indices carry no weight: " + (excluded_zero ? "yes" : "NO") +
                    "; value indices in [1, L]: " + (in_range ? "yes" : "NO") +
                    "; neighborhoods as specified: " + (neighborhoods ? "yes" : "NO")};
}

// 4 ------------------------------------------------------------------------

Outcome loss_identities() {
  num::Tape tape(false);
  const Var half_s = tape.constant(Matrix::Constant(1, 37, 0.5));
  const Var half_t = tape.constant(Matrix::Constant(1, 23, 0.5));
  const double dom = training::loss_dom(half_s, half_t).value()(0, 0);
  const double dom_err = std::abs(dom - 2.0 * std::numbers::ln2);

  auto rng = num::make_rng(4, "acceptance/loss");
  double decomposition = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Matrix parts = testing::uniform(rng, 1, 4, 0.0, 3.0);
    const double lambda = parts(0, 3);
    const Var total = training::total_loss(tape.constant(parts.col(0)), tape.constant(parts.col(1)),
                                           tape.constant(parts.col(2)), lambda);
    decomposition =
        std::max(decomposition, std::abs(total.value()(0, 0) - (parts(0, 0) + parts(0, 1) - lambda * parts(0, 2))));
  }

  const auto src = synthetic_windows(12, 12, 3, 41, data::Domain::source);
  const auto tgt = synthetic_windows(8, 12, 3, 42, data::Domain::target);
  const auto val = synthetic_windows(4, 12, 3, 43, data::Domain::target);
  model::DafModel m(tiny_model(), 4);
  const num::ParamStore init = m.params();
  training::TrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.batch_size = 4;
  cfg.epochs = 5;
  const auto fit = training::fit(m, {src, tgt, val}, cfg);
  bool frozen = true;
  for (auto* p : m.discriminator_parameters()) frozen = frozen && same_bytes(p->value.matrix(), init.at(p->name).value.matrix());
  bool generators_moved = false;
  for (auto* p : m.generator_parameters()) {
    generators_moved = generators_moved || !same_bytes(p->value.matrix(), init.at(p->name).value.matrix());
  }

  const bool pass = dom_err < 1e-12 && decomposition < 1e-12 && frozen && generators_moved;
  return {pass, "|dom(0.5) - 2 ln 2| = " + fmt(dom_err) + " < 1e-12; decomposition error " + fmt(decomposition) +
                    " < 1e-12; discriminator bit-identical after " + std::to_string(fit.steps) +
                    " steps at lambda=0: " + (frozen ? "yes" : "NO") +
                    (generators_moved ? "" : " (generators did not move either)")};
}

// 8 ------------------------------------------------------------------------

Outcome round_trips(const fs::path& work) {
  const auto src = synthetic_windows(12, 12, 3, 81, data::Domain::source);
  const auto tgt = synthetic_windows(8, 12, 3, 82, data::Domain::target);
  const auto val = synthetic_windows(6, 12, 3, 83, data::Domain::target);
  model::DafModel m(tiny_model(), 8);
  training::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 6;
  cfg.eval_every = 1;
  const auto fit = training::fit(m, {src, tgt, val}, cfg);
  const auto ckpt_path = work / "roundtrip.ckpt";
  num::save_checkpoint(ckpt_path, fit.best, {{"best_validation_nd", fit.best_validation_nd}});
  const auto loaded = num::load_checkpoint(ckpt_path);
  model::DafModel reloaded(m.config(), loaded.params);
  const double nd_err = std::abs(training::validation_nd(reloaded, val) - fit.best_validation_nd);

  data::SyntheticSpec spec;
  spec.count = 25;
  spec.history = 30;
  spec.horizon = 6;
  spec.frequency_min = 1.0 / 30.0;
  spec.frequency_max = 20.0 / 30.0;
  spec.seed = 88;
  const auto series = data::generate_sinusoids(spec);
  const auto csv = work / "roundtrip.csv";
  data::write_series_csv(csv, series);
  const auto direct = data::make_windows(series, 30, 6, data::CovariateKind::hourly, data::Domain::target).windows;
  const auto ingested = data::make_windows(data::read_series_csv(csv), 30, 6, data::CovariateKind::hourly,
                                           data::Domain::target)
                            .windows;
  bool exact = direct.size() == ingested.size();
  for (std::size_t i = 0; exact && i < direct.size(); ++i) {
    exact = direct[i].series_id == ingested[i].series_id && direct[i].start == ingested[i].start &&
            same_bytes(direct[i].x, ingested[i].x) && same_bytes(direct[i].y, ingested[i].y) &&
            same_bytes(direct[i].covariates, ingested[i].covariates);
  }

  double scale_err = 0.0;
  for (const auto& w : direct) {
    const auto s = data::scale_window(w);
    scale_err = std::max(scale_err, (data::descale(s.x, s.scale) - w.x).cwiseAbs().maxCoeff());
    scale_err = std::max(scale_err, (data::descale(s.y, s.scale) - w.y).cwiseAbs().maxCoeff());
  }

  const bool pass = nd_err < 1e-9 && exact && scale_err < 1e-12;
  return {pass, "checkpoint reload ND error " + fmt(nd_err) + " < 1e-9; CSV export -> ingest of " +
                    std::to_string(direct.size()) + " windows exact: " + (exact ? "yes" : "NO") +
                    "; descale(scale(x)) error " + fmt(scale_err) + " < 1e-12"};
}

// 5, 6, 7, 9 --------------------------------------------------------------

struct CliRun {
  int code = -1;
  eval::ExperimentReport report;
  double seconds = 0.0;
  fs::path out;
};

CliRun run_experiment(const std::string& protocol, const fs::path& out, const fs::path& overrides = {}) {
  std::vector<std::string> args{"daf", "experiment", protocol, "--scale", "desk", "--seed", "7", "--out", out.string()};
  if (!overrides.empty()) {
    args.push_back("--config");
    args.push_back(overrides.string());
  }
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  fs::create_directories(out);
  std::ofstream log(out.string() + ".log");
  std::cout << "  running `";
  for (std::size_t i = 1; i < args.size(); ++i) std::cout << (i > 1 ? " " : "") << args[i];
  std::cout << "` (log: " << out.string() << ".log)" << std::endl;
  CliRun r;
  r.out = out;
  const auto t0 = Clock::now();
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), log, log);
  r.seconds = seconds_since(t0);
  if (fs::exists(out / "report.json")) r.report = eval::report_from_json(nlohmann::json::parse(read_file(out / "report.json")));
  std::cout << "  finished in " << fixed(r.seconds / 60.0, 1) << " min, exit code " << r.code << std::endl;
  return r;
}

std::string cell_text(const eval::CellResult* c) {
  if (c == nullptr) return "missing";
  if (!c->ok()) return "failed";
  std::string seeds;
  for (double v : c->nd) seeds += (seeds.empty() ? "" : ", ") + fixed(v);
  return fixed(c->mean) + " +/- " + fixed(c->std) + " [" + seeds + "]";
}

Outcome few_shot(const CliRun& run) {
  const auto* attf = run.report.find("N=100", "AttF");
  const auto* daf = run.report.find("N=100", "DAF");
  if (run.code != 0 || attf == nullptr || daf == nullptr || !attf->ok() || !daf->ok()) {
    return {false, "few-shot run did not complete (exit code " + std::to_string(run.code) + ")"};
  }
  const bool ordering = daf->mean < attf->mean;
  const bool band = daf->mean <= 0.09;
  const bool fast = run.seconds < 30.0 * 60.0;
  return {ordering && band, "N=100: DAF " + cell_text(daf) + ", AttF " + cell_text(attf) + "; (a) DAF < AttF: " +
                                (ordering ? "yes" : "NO") + "; (b) DAF <= 0.09: " + (band ? "yes" : "NO") +
                                "; whole N grid took " + fixed(run.seconds / 60.0, 1) + " min (target < 30: " +
                                (fast ? "met" : "missed") + ")"};
}

Outcome cold_start(const fs::path& work) {
  const auto overrides = work / "cold_start.toml";
  std::ofstream(overrides) << "[experiment]\ncold_start_histories = [45]\n";
  const auto run = run_experiment("cold-start", work / "cold_start", overrides);
  const auto* attf = run.report.find("T=45", "AttF");
  const auto* daf = run.report.find("T=45", "DAF");
  if (run.code != 0 || attf == nullptr || daf == nullptr || !attf->ok() || !daf->ok()) {
    return {false, "cold-start run did not complete (exit code " + std::to_string(run.code) + ")"};
  }
  const bool ordering = daf->mean < attf->mean;
  return {ordering, "T=45: DAF " + cell_text(daf) + ", AttF " + cell_text(attf) + "; DAF < AttF: " +
                        (ordering ? "yes" : "NO") + "; " + fixed(run.seconds / 60.0, 1) + " min"};
}

// The full-DAF column is the few-shot N=100 DAF cell: same task, seeds,
// model and training settings, so rerunning it would repeat that work bit for bit.
Outcome ablation(const fs::path& work, const CliRun& few) {
  const auto overrides = work / "ablation.toml";
  std::ofstream(overrides) << "[experiment]\nablation_variants = [\"no-adv\", \"no-q-share\", \"no-k-share\", "
                              "\"v-share\"]\n";
  const auto run = run_experiment("ablation", work / "ablation", overrides);
  const auto* full = few.report.find("N=100", "DAF");
  if (run.code != 0 || full == nullptr || !full->ok()) {
    return {false, "ablation run did not complete (exit code " + std::to_string(run.code) + ")"};
  }
  auto shared = [](nlohmann::json j) {
    j.erase("ablation");
    j.erase("few_shot");
    j.erase("cold_start");
    return j;
  };
  const auto& fc = few.report.config;
  const auto& ac = run.report.config;
  const bool same_task = shared(fc) == shared(ac) && ac.at("ablation").at("count") == 100 &&
                         fc.at("few_shot").at("holdout") == ac.at("few_shot").at("holdout") &&
                         fc.at("few_shot").at("frequency_min") == ac.at("few_shot").at("frequency_min") &&
                         fc.at("few_shot").at("frequency_max") == ac.at("few_shot").at("frequency_max");
  bool pass = same_task;
  std::string detail = "full DAF " + fixed(full->mean);
  for (const std::string v : {"no-adv", "no-q-share", "no-k-share", "v-share"}) {
    const auto* c = run.report.find("N=100", v);
    const bool ok = c != nullptr && c->ok() && full->mean <= c->mean + 0.01;
    pass = pass && ok;
    detail += "; " + v + " " + (c && c->ok() ? fixed(c->mean) : std::string("failed")) + (ok ? " ok" : " VIOLATED");
  }
  detail += " (full <= variant + 0.01); " + fixed(run.seconds / 60.0, 1) + " min";
  if (!same_task) detail += "; ablation task differs from the few-shot N=100 task";
  return {pass, detail};
}

Outcome determinism(const CliRun& a, const CliRun& b) {
  const auto ra = read_file(a.out / "report.json"), rb = read_file(b.out / "report.json");
  const auto ta = read_file(a.out / "report.txt"), tb = read_file(b.out / "report.txt");
  const bool same = !ra.empty() && ra == rb && ta == tb && a.code == 0 && b.code == 0;
  return {same, "report.json " + cli::git_blob_hash(ra).substr(0, 12) + " vs " + cli::git_blob_hash(rb).substr(0, 12) +
                    (same ? ", byte-identical" : ", DIFFERENT")};
}

std::set<int> parse_only(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = "acceptance_work";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = parse_only(argv[++i]);
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: daf_acceptance [--only 1,2,...] [--work DIR]\n";
      return 2;
    }
  }
  auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };
  fs::remove_all(work);
  fs::create_directories(work);

  const std::map<int, std::string> titles{{1, "gradient suite"},     {2, "attention oracle"},
                                          {3, "masking invariants"}, {4, "loss identities"},
                                          {5, "desk few-shot"},      {6, "desk cold-start"},
                                          {7, "ablation ordering"},  {8, "round trips"},
                                          {9, "determinism"}};
  std::map<int, Outcome> results;
  auto record = [&](int k, Outcome o) {
    std::cout << "criterion " << k << " [" << (o.pass ? "PASS" : "FAIL") << "] " << titles.at(k) << ": " << o.detail
              << std::endl;
    results[k] = std::move(o);
  };
  auto guarded = [&](int k, auto&& body) {
    if (!wanted(k)) return;
    try {
      record(k, body());
    } catch (const std::exception& e) {
      record(k, {false, std::string("threw: ") + e.what()});
    }
  };

  guarded(1, gradient_suite);
  guarded(2, attention_oracle);
  guarded(3, masking);
  guarded(4, loss_identities);
  guarded(8, [&] { return round_trips(work); });

  std::optional<CliRun> first;
  if (wanted(5) || wanted(7) || wanted(9)) first = run_experiment("few-shot", work / "few_shot_a");
  guarded(5, [&] { return few_shot(*first); });
  guarded(9, [&] { return determinism(*first, run_experiment("few-shot", work / "few_shot_b")); });
  guarded(6, [&] { return cold_start(work); });
  guarded(7, [&] { return ablation(work, *first); });

  std::ofstream summary(work / "results.txt");
  int failed = 0;
  std::cout << "\nsummary:\n";
  for (const auto& [k, o] : results) {
    const std::string line = "criterion " + std::to_string(k) + " [" + (o.pass ? "PASS" : "FAIL") + "] " + titles.at(k);
    std::cout << "  " << line << '\n';
    summary << line << ": " << o.detail << '\n';
    failed += o.pass ? 0 : 1;
  }
  std::cout << failed << " of " << results.size() << " criteria failed" << std::endl;
  return failed == 0 ? 0 : 1;
}
