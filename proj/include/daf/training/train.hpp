#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "daf/model/generator.hpp"
#include "daf/numerics/optimizer.hpp"
#include "daf/numerics/random.hpp"

namespace daf::training {

using model::Index;
using model::Matrix;
using model::Var;

struct TrainConfig {
  double lambda = 1.0;
  double learning_rate = 1e-3;
  Index epochs = 100;
  Index batch_size = 64;
  Index patience = 10;
  // Steps between validations; 0 means once per epoch.
  Index eval_every = 0;
  model::SharingStrategy strategy = model::SharingStrategy::full;
  bool adversarial = true;
  std::uint64_t seed = 0;
  std::int64_t max_iterations = 100'000;

  // lambda, or 0 when adversarial training is off.
  double effective_lambda() const { return adversarial ? lambda : 0.0; }
  bool uses_discriminator() const;
  void validate() const;
};

/// Mean over the batch of the per-window mean squared reconstruction error
/// plus the per-window mean squared forecast error, in scaled units.
Var loss_seq(Var reconstruction, Var forecast, const Matrix& history_targets, const Matrix& future_targets);
Var loss_seq(const model::GeneratorOutput& out, const model::GeneratorBatch& batch);

/// Cross-entropy of the discriminator on source (label 1) and target (label 0)
/// outputs, each averaged over its own set; outputs are clamped to
/// [1e-7, 1 - 1e-7] before the logs.
Var loss_dom(Var source_probabilities, Var target_probabilities);

constexpr double kProbabilityClamp = 1e-7;

/// seq_S + seq_T - lambda * dom. An invalid `seq_source` (single-domain
/// models) contributes nothing, nor does an invalid `dom`.
Var total_loss(Var seq_source, Var seq_target, Var dom, double lambda);
double total_loss(double seq_source, double seq_target, double dom, double lambda);

struct StepMetrics {
  double seq_source = 0.0;
  double seq_target = 0.0;
  double dom = 0.0;
  double total = 0.0;
};

/// One alternating update: the generators descend the total loss with the
/// discriminator frozen, then the discriminator ascends it on queries and keys
/// recomputed by the updated generators and detached from them. Without an
/// adversarial term the discriminator is left alone. Batches must be scaled.
StepMetrics train_step(model::DafModel& model, num::Adam& generator_optimizer, num::Adam& discriminator_optimizer,
                       const model::GeneratorBatch* source, const model::GeneratorBatch& target,
                       const TrainConfig& config);

struct TrainState {
  std::int64_t step = 0;
  Index epoch = 0;
  double best_validation_nd = std::numeric_limits<double>::infinity();
  std::int64_t best_step = 0;
  Index evaluations_since_best = 0;
  num::Adam generator_optimizer;
  num::Adam discriminator_optimizer;
  num::Rng rng;
};

/// One row of the training history, written per validation.
struct HistoryRecord {
  std::int64_t step = 0;
  double seq_source = 0.0;
  double seq_target = 0.0;
  double dom = 0.0;
  double validation_nd = 0.0;
};

void write_history(std::ostream& out, std::span<const HistoryRecord> history);

/// Raw (unscaled) windows.
struct FitData {
  std::span<const data::SeriesWindow> source_train;
  std::span<const data::SeriesWindow> target_train;
  std::span<const data::SeriesWindow> target_validation;
};

struct FitResult {
  num::ParamStore best;
  std::vector<HistoryRecord> history;
  double best_validation_nd = 0.0;
  std::int64_t best_step = 0;
  std::int64_t steps = 0;
  Index epochs = 0;
  bool stopped_early = false;
};

// Target-domain ND of the model's forecasts on raw windows.
double validation_nd(model::DafModel& model, std::span<const data::SeriesWindow> windows);

/// Alternating training with early stopping on target validation ND. An epoch
/// is ceil(|target train| / batch_size) steps over a fresh permutation of the
/// target windows, each paired with batch_size source windows drawn with
/// replacement. Training stops after `patience` validations without
/// improvement, after `epochs` epochs or after `max_iterations` steps. The
/// model is left holding the best parameters, which are also returned.
FitResult fit(model::DafModel& model, const FitData& data, const TrainConfig& config);

}  // namespace daf::training
