#include "doctest.h"

#include <cmath>
#include <sstream>

#include "daf/eval/experiment.hpp"
#include "daf/eval/metrics.hpp"

using namespace daf;
using namespace daf::eval;

namespace {

data::SeriesWindow truth_window(std::initializer_list<double> y) {
  data::SeriesWindow w;
  w.x = num::Vector::Ones(3);
  w.y.resize(static_cast<Index>(y.size()));
  Index i = 0;
  for (double v : y) w.y(i++) = v;
  return w;
}

model::Forecast forecast_of(std::initializer_list<double> v) {
  model::Forecast f;
  f.values.resize(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) f.values(i++) = x;
  f.descaled = true;
  return f;
}

ProtocolConfig tiny_protocol() {
  auto c = ProtocolConfig::desk();
  c.horizon = 2;
  c.source_count = 12;
  c.source_history = 12;
  c.source_frequency_min = c.few_shot_frequency_min = 1.0 / 12.0;
  c.source_frequency_max = c.few_shot_frequency_max = 0.5;
  c.cold_start_count = 9;
  c.cold_start_histories = {10};
  c.cold_start_frequency = 0.1;
  c.few_shot_counts = {4};
  c.few_shot_holdout = 3;
  c.ablation_count = 4;
  c.ablation_variants = {"no-adv", "v-share"};
  c.seeds = 2;
  c.root_seed = 3;
  c.model.hidden = 4;
  c.model.kernel_sizes = {3};
  c.train.batch_size = 4;
  c.train.eval_every = 1;
  c.train.max_iterations = 3;
  return c;
}

}  // namespace

TEST_CASE("ND examples") {
  const std::vector<data::SeriesWindow> truth{truth_window({1, 2})};
  CHECK(std::abs(nd_metric(truth, std::vector{forecast_of({1, 1})}).nd - 1.0 / 3.0) < 1e-15);
  CHECK(nd_metric(truth, std::vector{forecast_of({1, 2})}).nd == 0.0);

  num::Matrix z(2, 3), zh(2, 3);
  z << 1, -2, 3, 4, 5, -6;
  zh << 0, -2, 1, 4, 7, -6;
  const double nd = nd_metric(z, zh).nd;
  CHECK(std::abs(nd - 5.0 / 21.0) < 1e-15);
  CHECK(std::abs(nd_metric(z * 7.5, zh * 7.5).nd - nd) < 1e-15);
  // Pooled, not an average of per-window ratios.
  CHECK(std::abs(nd - 0.5 * (3.0 / 6.0 + 2.0 / 15.0)) > 1e-3);
  CHECK_THROWS_AS(nd_metric(num::Matrix::Zero(1, 2), num::Matrix::Ones(1, 2)), UndefinedMetricError);
  CHECK_THROWS_AS(nd_metric(z, num::Matrix::Zero(2, 2)), DimensionError);
}

TEST_CASE("ND pools exactly over disjoint sets") {
  num::Matrix a(2, 3), ah(2, 3), b(1, 3), bh(1, 3);
  a << 1, 2, 3, -1, 0.5, 2;
  ah << 1.5, 2, 2, 0, 0, 2;
  b << 10, 11, 12;
  bh << 9, 11, 14;
  num::Matrix all(3, 3), allh(3, 3);
  all << a, b;
  allh << ah, bh;
  CHECK(std::abs(combine(nd_metric(a, ah), nd_metric(b, bh)).nd - nd_metric(all, allh).nd) < 1e-15);
}

TEST_CASE("ND refuses scaled inputs") {
  const std::vector<data::SeriesWindow> truth{truth_window({1, 2})};
  auto f = forecast_of({1, 1});
  f.descaled = false;
  CHECK_THROWS_AS(nd_metric(truth, std::vector{f}), ContractError);
  auto scaled = truth;
  scaled[0].scaled = true;
  CHECK_THROWS_AS(nd_metric(scaled, std::vector{forecast_of({1, 1})}), ContractError);
  CHECK_THROWS_AS(nd_metric(truth, std::vector<model::Forecast>{}), DimensionError);
}

TEST_CASE("summary statistics") {
  CellResult c;
  c.nd = {0.1, 0.2, 0.4};
  summarize(c);
  const double mean = (0.1 + 0.2 + 0.4) / 3.0;
  const double var = ((0.1 - mean) * (0.1 - mean) + (0.2 - mean) * (0.2 - mean) + (0.4 - mean) * (0.4 - mean)) / 2.0;
  CHECK(std::abs(c.mean - mean) < 1e-12);
  CHECK(std::abs(c.std - std::sqrt(var)) < 1e-12);
  c.nd = {0.3};
  summarize(c);
  CHECK(c.std == 0.0);
}

TEST_CASE("report table and JSON") {
  ExperimentReport r;
  r.protocol = "few-shot";
  r.config = {{"seeds", 2}};
  r.cells.push_back({"few-shot", "N=20", "AttF", {0.1, 0.12}, 0.11, 0.0141, {}});
  r.cells.push_back({"few-shot", "N=20", "DAF", {0.09, 0.07}, 0.08, 0.0141, {}});
  r.cells.push_back({"few-shot", "N=50", "DAF", {}, 0.0, 0.0, {"seed 0: boom"}});
  const auto table = format_table(r);
  CHECK(table.find("0.110+/-0.014") != std::string::npos);
  CHECK(table.find("failed") != std::string::npos);
  std::istringstream lines(table);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("AttF") != std::string::npos);
  CHECK(!r.ok());

  const auto back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(to_json(back) == to_json(r));
  REQUIRE(back.find("N=20", "DAF") != nullptr);
  CHECK(back.find("N=20", "DAF")->nd == std::vector<double>{0.09, 0.07});
  CHECK(back.find("N=99", "DAF") == nullptr);
}

TEST_CASE("protocol defaults") {
  const auto large = ProtocolConfig::large();
  CHECK(large.source_count == 5000);
  CHECK(large.cold_start_count == 5000);
  CHECK(large.horizon == 18);
  CHECK(large.few_shot_counts == std::vector<Index>{20, 50, 100});
  CHECK(large.cold_start_histories == std::vector<Index>{36, 45, 54});
  const auto desk = ProtocolConfig::desk();
  CHECK(desk.cold_start_count == 500);
  CHECK(desk.ablation_variants == std::vector<std::string>{"full", "no-adv", "no-q-share", "no-k-share", "v-share"});
  CHECK(desk.model.hidden == 64);
  CHECK(desk.model.kernel_sizes == std::vector<Index>{3, 5});
  CHECK(desk.train.learning_rate == 1e-3);
  CHECK(desk.train.lambda == 1.0);

  const auto seeds = run_seeds(desk);
  CHECK(seeds.size() == 3);
  CHECK(seeds[0] != seeds[1]);
  CHECK(run_seeds(desk) == seeds);
}

TEST_CASE("variants") {
  model::ModelConfig m;
  training::TrainConfig t;
  configure_variant("no-adv", m, t);
  CHECK(m.strategy == model::SharingStrategy::full);
  CHECK(!t.adversarial);
  CHECK(t.effective_lambda() == 0.0);
  configure_variant("no-k-share", m, t);
  CHECK(m.strategy == model::SharingStrategy::no_k_share);
  CHECK(t.adversarial);
  CHECK(t.strategy == m.strategy);
  configure_variant("AttF", m, t);
  CHECK(m.strategy == model::SharingStrategy::attf);
  CHECK_THROWS_AS(configure_variant("no-v-share", m, t), ConfigError);
}

TEST_CASE("task construction") {
  const auto c = tiny_protocol();
  const auto few = make_few_shot_task(c, 4, 1);
  CHECK(few.target.train.size() == 4);
  CHECK(few.target.validation.size() == 3);
  CHECK(few.target.test.size() == 3);
  CHECK(few.source_train.size() == static_cast<std::size_t>(std::llround(0.8 * 12)));
  CHECK(few.target.train.front().history() == 12);
  const auto cold = make_cold_start_task(c, 10, 1);
  CHECK(cold.target.train.size() == 3);
  CHECK(cold.target.train.front().history() == 10);
  CHECK(cold.source_train.front().history() == 12);

  const auto again = make_few_shot_task(c, 4, 1);
  for (std::size_t i = 0; i < few.target.test.size(); ++i) CHECK(few.target.test[i].y == again.target.test[i].y);
}

TEST_CASE("protocol runs are deterministic and report every seed") {
  const auto c = tiny_protocol();
  const auto a = run_few_shot(c);
  const auto b = run_few_shot(c);
  CHECK(a.ok());
  REQUIRE(a.cells.size() == 2);
  for (const auto& cell : a.cells) {
    CHECK(cell.nd.size() == 2);
    CellResult again = cell;
    summarize(again);
    CHECK(std::abs(again.mean - cell.mean) < 1e-12);
    CHECK(std::abs(again.std - cell.std) < 1e-12);
  }
  CHECK(to_json(a).dump() == to_json(b).dump());

  const auto abl = run_ablations(c);
  CHECK(abl.cells.size() == 2);
  CHECK(abl.ok());
  const auto cold = run_protocol(Protocol::cold_start, c);
  CHECK(cold.cells.size() == 2);
  CHECK(cold.find("T=10", "DAF") != nullptr);
}
