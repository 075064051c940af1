#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmicf/adam.hpp"
#include "dmicf/autodiff.hpp"
#include "dmicf/graph.hpp"
#include "dmicf/model.hpp"

namespace dmicf {

/// Training hyperparameters; defaults follow the published setup
/// (τ = 0.2, S = 60, lr = 3e-5, patience 3 on Recall@40).
struct TrainConfig {
  double temperature = 0.2;
  std::size_t negatives = 60;
  double learning_rate = 3e-5;
  std::size_t batch_size = 4096;
  std::size_t eval_every = 1;
  std::size_t patience = 3;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 2024;
  double validation_fraction = 0.05;
  std::size_t early_stop_cutoff = 40;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Raised when the loss stops being finite.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// S independent uniform draws from [0, num_items). Items the user has
/// interacted with are not filtered out.
std::vector<std::size_t> sample_negatives(Rng& rng, std::size_t num_items, std::size_t count);

struct NormalizedScores {
  double pos_prob = 0.0;
  std::vector<double> neg_probs;
};

/// Temperature softmax over the positive and its negatives; all S+1 values
/// share one denominator and sum to 1.
NormalizedScores normalize_scores(double raw_pos, std::span<const double> raw_negs,
                                  double temperature);

/// Σ over instances of (1 − pos_prob)² + Σ_l neg_prob_l².
double multi_negative_loss(std::span<const NormalizedScores> instances);

/// Positives with their sampled negatives (negatives row-major, S per positive).
struct TrainingBatch {
  std::vector<Edge> positives;
  std::vector<std::size_t> negatives;
  std::size_t negatives_per_positive = 0;
};

struct BatchForward {
  ad::Var loss;             // 1×1
  ad::Var probabilities;    // B×(S+1); column 0 is the positive
};

/// Builds the differentiable loss of one batch on `tape`.
BatchForward batch_loss(ad::Tape& tape, const ModelConfig& cfg, const InteractionGraph& graph,
                        const BoundModel& model, const TrainingBatch& batch, double temperature);

/// Edges used for fitting plus per-user validation items carved out of them.
struct ValidationSplit {
  std::shared_ptr<const InteractionGraph> fit;
  std::vector<std::vector<std::size_t>> validation;
};

/// Deterministic per-user hold-out: each user with ≥ 2 edges gives up
/// round(fraction·degree) of them (keeping at least one).
ValidationSplit split_validation(const InteractionGraph& train, double fraction,
                                 std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> validation_recall;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParameters best;
  ModelParameters final;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_metric;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called with the current parameters after every epoch.
  std::function<void(std::size_t epoch, const ModelParameters&)> on_parameters;
};

/// Runs the training loop on `model` in place and returns the best-validation
/// snapshot (or the last parameters when no validation data exists).
TrainResult train(DmicfModel& model, const std::vector<std::vector<std::size_t>>& validation,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

/// One optimisation step on a batch; returns the batch loss. Exposed for
/// benchmarks and tests.
class Trainer {
 public:
  Trainer(DmicfModel& model, const TrainConfig& cfg);

  TrainingBatch make_batch(std::span<const Edge> positives);
  double step(const TrainingBatch& batch);

  Rng& rng() noexcept { return rng_; }

 private:
  DmicfModel& model_;
  TrainConfig cfg_;
  Rng rng_;
  AdamState adam_;
};

}  // namespace dmicf
