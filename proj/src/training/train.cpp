#include "daf/training/train.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <ostream>

#include "json.hpp"

#include "daf/eval/metrics.hpp"
#include "daf/model/predict.hpp"

namespace daf::training {

using data::Domain;
using model::SharingStrategy;

bool TrainConfig::uses_discriminator() const {
  return strategy != SharingStrategy::attf && effective_lambda() > 0.0;
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
}

Var loss_seq(Var reconstruction, Var forecast, const Matrix& history_targets, const Matrix& future_targets) {
  if (reconstruction.rows() != history_targets.rows() || reconstruction.cols() != history_targets.cols() ||
      forecast.rows() != future_targets.rows() || forecast.cols() != future_targets.cols()) {
    throw DimensionError("loss_seq: outputs and targets differ in shape");
  }
  auto& tape = reconstruction.tape();
  // Every window has the same T and tau, so the mean of per-window means is
  // the mean over all positions.
  Var rec = num::mean(num::square(num::sub(reconstruction, tape.constant(history_targets))));
  Var fut = num::mean(num::square(num::sub(forecast, tape.constant(future_targets))));
  return num::add(rec, fut);
}

Var loss_seq(const model::GeneratorOutput& out, const model::GeneratorBatch& batch) {
  return loss_seq(out.reconstruction, out.forecast, batch.history_targets, batch.future_targets);
}

Var loss_dom(Var source_probabilities, Var target_probabilities) {
  if (source_probabilities.value().size() == 0 || target_probabilities.value().size() == 0) {
    throw ContractError("loss_dom needs non-empty source and target sets");
  }
  constexpr double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  Var log_src = num::mean(num::log_clamped(source_probabilities, lo, hi));
  Var not_tgt = num::add_scalar(num::scale(target_probabilities, -1.0), 1.0);
  Var log_tgt = num::mean(num::log_clamped(not_tgt, lo, hi));
  return num::scale(num::add(log_src, log_tgt), -1.0);
}

Var total_loss(Var seq_source, Var seq_target, Var dom, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  Var total = seq_target;
  if (seq_source.valid()) total = num::add(seq_source, total);
  if (dom.valid() && lambda != 0.0) total = num::sub(total, num::scale(dom, lambda));
  return total;
}

double total_loss(double seq_source, double seq_target, double dom, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  return seq_source + seq_target - lambda * dom;
}

namespace {

// Discriminator layers as constants: no gradient flows into them.
std::vector<num::AffineLayer> frozen(num::Tape& tape, const model::DiscriminatorRefs& refs) {
  std::vector<num::AffineLayer> out;
  for (const auto& r : refs.layers) {
    out.push_back({tape.constant(r.weight->value.matrix()), tape.constant(r.bias->value.matrix())});
  }
  return out;
}

Matrix latent_values(model::DafModel& m, const model::GeneratorBatch& batch, Domain domain) {
  num::Tape tape(false);
  const auto g = model::bind(tape, m.generator(domain));
  const auto out = model::generator_forward(tape, batch, g, m.config(), {.reconstruct = false, .forecast_qk = m.config().disc_forecast_region});
  return model::latent_set(out, m.config().disc_forecast_region).value();
}

}  // namespace

StepMetrics train_step(model::DafModel& m, num::Adam& generator_optimizer, num::Adam& discriminator_optimizer,
                       const model::GeneratorBatch* source, const model::GeneratorBatch& target,
                       const TrainConfig& config) {
  const auto& mc = m.config();
  if (mc.has_source() && source == nullptr) throw ContractError("this strategy needs a source batch");
  const bool adversarial = config.uses_discriminator();
  const double lambda = config.effective_lambda();
  const model::ForwardOptions options{.forecast_qk = adversarial && mc.disc_forecast_region};

  StepMetrics metrics;
  {
    num::Tape tape;
    const auto g_target = model::bind(tape, m.generator(Domain::target));
    const auto out_target = model::generator_forward(tape, target, g_target, mc, options);
    Var seq_target = loss_seq(out_target, target);
    metrics.seq_target = seq_target.value()(0, 0);

    Var seq_source, dom;
    if (mc.has_source()) {
      const auto g_source = model::bind(tape, m.generator(Domain::source));
      const auto out_source = model::generator_forward(tape, *source, g_source, mc, options);
      seq_source = loss_seq(out_source, *source);
      metrics.seq_source = seq_source.value()(0, 0);
      if (adversarial) {
        const auto disc = frozen(tape, m.discriminator());
        Var p_source = model::discriminate(model::latent_set(out_source, mc.disc_forecast_region), disc);
        Var p_target = model::discriminate(model::latent_set(out_target, mc.disc_forecast_region), disc);
        dom = loss_dom(p_source, p_target);
        metrics.dom = dom.value()(0, 0);
      }
    }
    Var total = total_loss(seq_source, seq_target, dom, lambda);
    metrics.total = total.value()(0, 0);
    tape.backward(total);
    generator_optimizer.step(m.generator_parameters(), num::Direction::descend);
  }

  if (adversarial) {
    const Matrix h_source = latent_values(m, *source, Domain::source);
    const Matrix h_target = latent_values(m, target, Domain::target);
    num::Tape tape;
    const auto disc = model::bind(tape, m.discriminator());
    Var dom = loss_dom(model::discriminate(tape.constant(h_source), disc),
                       model::discriminate(tape.constant(h_target), disc));
    // Only -lambda * dom of the total loss depends on the discriminator.
    tape.backward(num::scale(dom, -lambda));
    discriminator_optimizer.step(m.discriminator_parameters(), num::Direction::ascend);
  }
  return metrics;
}

void write_history(std::ostream& out, std::span<const HistoryRecord> history) {
  for (const auto& r : history) {
    nlohmann::json j{{"step", r.step},
                     {"seq_S", r.seq_source},
                     {"seq_T", r.seq_target},
                     {"dom", r.dom},
                     {"val_nd", r.validation_nd}};
    out << j.dump() << '\n';
  }
}

double validation_nd(model::DafModel& m, std::span<const data::SeriesWindow> windows) {
  const auto forecasts = model::predict(m, windows, Domain::target);
  return eval::nd_metric(windows, forecasts).nd;
}

FitResult fit(model::DafModel& m, const FitData& data, const TrainConfig& config) {
  config.validate();
  const auto& mc = m.config();
  if (config.strategy != mc.strategy) {
    throw ConfigError(std::string("training strategy ") + model::to_string(config.strategy) +
                      " does not match the model's " + model::to_string(mc.strategy));
  }
  if (data.target_train.empty()) throw ConfigError("target training split is empty");
  if (data.target_validation.empty()) throw ConfigError("target validation split is empty");
  if (mc.has_source() && data.source_train.empty()) throw ConfigError("source training split is empty");

  std::vector<data::SeriesWindow> source, target;
  if (mc.has_source()) {
    for (const auto& w : data.source_train) source.push_back(data::scale_window(w));
  }
  for (const auto& w : data.target_train) target.push_back(data::scale_window(w));

  const num::AdamOptions adam{.learning_rate = config.learning_rate};
  TrainState state{.generator_optimizer = num::Adam(adam),
                   .discriminator_optimizer = num::Adam(adam),
                   .rng = num::make_rng(config.seed, "shuffle")};
  const Index n = static_cast<Index>(target.size());
  const Index steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const Index eval_every = config.eval_every > 0 ? config.eval_every : steps_per_epoch;

  FitResult result;
  result.best = m.params();
  StepMetrics running;
  Index since_eval = 0;
  std::vector<std::size_t> order(target.size());
  std::uniform_int_distribution<std::size_t> pick(0, source.empty() ? 0 : source.size() - 1);

  bool stop = false;
  while (!stop && state.epoch < config.epochs) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    for (Index k = 0; k < steps_per_epoch && !stop; ++k) {
      std::vector<const data::SeriesWindow*> tb;
      for (Index i = k * config.batch_size; i < std::min(n, (k + 1) * config.batch_size); ++i) {
        tb.push_back(&target[order[static_cast<std::size_t>(i)]]);
      }
      const auto target_batch = model::make_batch(std::span<const data::SeriesWindow* const>(tb));
      std::optional<model::GeneratorBatch> source_batch;
      if (mc.has_source()) {
        std::vector<const data::SeriesWindow*> sb;
        for (Index i = 0; i < config.batch_size; ++i) sb.push_back(&source[pick(state.rng)]);
        source_batch = model::make_batch(std::span<const data::SeriesWindow* const>(sb));
      }
      const auto metrics = train_step(m, state.generator_optimizer, state.discriminator_optimizer,
                                      source_batch ? &*source_batch : nullptr, target_batch, config);
      ++state.step;
      ++since_eval;
      running.seq_source += metrics.seq_source;
      running.seq_target += metrics.seq_target;
      running.dom += metrics.dom;

      const bool last = state.step >= config.max_iterations;
      if (since_eval == eval_every || last) {
        HistoryRecord rec;
        rec.step = state.step;
        rec.seq_source = running.seq_source / static_cast<double>(since_eval);
        rec.seq_target = running.seq_target / static_cast<double>(since_eval);
        rec.dom = running.dom / static_cast<double>(since_eval);
        rec.validation_nd = validation_nd(m, data.target_validation);
        result.history.push_back(rec);
        running = {};
        since_eval = 0;
        if (rec.validation_nd < state.best_validation_nd) {
          state.best_validation_nd = rec.validation_nd;
          state.best_step = state.step;
          state.evaluations_since_best = 0;
          result.best.assign_values(m.params());
        } else if (++state.evaluations_since_best >= config.patience) {
          stop = true;
          result.stopped_early = true;
        }
      }
      if (last) stop = true;
    }
    ++state.epoch;
  }

  if (result.history.empty()) {
    HistoryRecord rec;
    rec.step = state.step;
    if (since_eval > 0) {
      rec.seq_source = running.seq_source / static_cast<double>(since_eval);
      rec.seq_target = running.seq_target / static_cast<double>(since_eval);
      rec.dom = running.dom / static_cast<double>(since_eval);
    }
    rec.validation_nd = validation_nd(m, data.target_validation);
    result.history.push_back(rec);
    state.best_validation_nd = rec.validation_nd;
    state.best_step = state.step;
    result.best.assign_values(m.params());
  }

  m.params().assign_values(result.best);
  result.best_validation_nd = state.best_validation_nd;
  result.best_step = state.best_step;
  result.steps = state.step;
  result.epochs = state.epoch;
  return result;
}

}  // namespace daf::training
