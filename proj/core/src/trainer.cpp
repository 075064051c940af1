#include "dmicf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dmicf/eval.hpp"

namespace dmicf {

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("train.temperature must be > 0");
  if (negatives == 0) throw ConfigError("train.negatives must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (eval_every == 0) throw ConfigError("train.eval_every must be >= 1");
  if (patience == 0) throw ConfigError("train.patience must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train.validation_fraction must lie in (0,1)");
  }
  if (early_stop_cutoff == 0) throw ConfigError("train.early_stop_cutoff must be >= 1");
}

std::vector<std::size_t> sample_negatives(Rng& rng, std::size_t num_items, std::size_t count) {
  if (num_items == 0) throw std::invalid_argument("sample_negatives: no items");
  std::uniform_int_distribution<std::size_t> dist(0, num_items - 1);
  std::vector<std::size_t> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

NormalizedScores normalize_scores(double raw_pos, std::span<const double> raw_negs,
                                  double temperature) {
  std::vector<double> row;
  row.reserve(raw_negs.size() + 1);
  row.push_back(raw_pos);
  row.insert(row.end(), raw_negs.begin(), raw_negs.end());
  ad::Tape tape(false);
  const Tensor2 probs =
      ad::softmax_rows(tape.constant(Tensor2::row_vector(row)), temperature).value();
  NormalizedScores out;
  out.pos_prob = probs(0, 0);
  out.neg_probs.assign(probs.data().begin() + 1, probs.data().end());
  return out;
}

double multi_negative_loss(std::span<const NormalizedScores> instances) {
  double total = 0.0;
  for (const auto& s : instances) {
    total += (1.0 - s.pos_prob) * (1.0 - s.pos_prob);
    for (double p : s.neg_probs) total += p * p;
  }
  return total;
}

BatchForward batch_loss(ad::Tape& tape, const ModelConfig& cfg, const InteractionGraph& graph,
                        const BoundModel& model, const TrainingBatch& batch, double temperature) {
  (void)tape;
  const std::size_t b = batch.positives.size();
  const std::size_t s = batch.negatives_per_positive;
  if (b == 0) throw std::invalid_argument("batch_loss: empty batch");
  if (batch.negatives.size() != b * s) {
    throw DimensionError("batch_loss: expected " + std::to_string(b * s) + " negatives, got " +
                         std::to_string(batch.negatives.size()));
  }

  std::vector<std::size_t> users, items;
  for (const Edge& e : batch.positives) {
    users.push_back(e.user);
    items.push_back(e.item);
  }
  items.insert(items.end(), batch.negatives.begin(), batch.negatives.end());
  auto uniq = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(users);
  uniq(items);
  auto local = [](const std::vector<std::size_t>& sorted, std::size_t x) {
    return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), x) -
                                    sorted.begin());
  };

  // Pair p = k·(S+1) + j: j = 0 is the positive, j ≥ 1 the negatives.
  std::vector<std::size_t> user_rows, item_rows;
  user_rows.reserve(b * (s + 1));
  item_rows.reserve(b * (s + 1));
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t u = local(users, batch.positives[k].user);
    user_rows.push_back(u);
    item_rows.push_back(local(items, batch.positives[k].item));
    for (std::size_t j = 0; j < s; ++j) {
      user_rows.push_back(u);
      item_rows.push_back(local(items, batch.negatives[k * s + j]));
    }
  }

  const EntityBlock block = encode_entities(cfg, graph, model, users, items);
  const ad::Var raw = score_pairs(cfg, model, block, user_rows, item_rows);
  const ad::Var probs = ad::softmax_rows(ad::reshape(raw, b, s + 1), temperature);
  Tensor2 labels(b, s + 1);
  for (std::size_t k = 0; k < b; ++k) labels(k, 0) = 1.0;
  return {ad::squared_error_sum(probs, labels), probs};
}

ValidationSplit split_validation(const InteractionGraph& train, double fraction,
                                 std::uint64_t seed) {
  Rng rng(seed ^ 0x5eedULL);
  ValidationSplit out;
  out.validation.assign(train.num_users(), {});
  std::vector<Edge> keep;
  keep.reserve(train.num_edges());
  for (std::size_t u = 0; u < train.num_users(); ++u) {
    std::vector<std::size_t> items(train.items_of(u).begin(), train.items_of(u).end());
    std::size_t hold = 0;
    if (items.size() >= 2) {
      hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(items.size())));
      hold = std::min(hold, items.size() - 1);
    }
    std::shuffle(items.begin(), items.end(), rng);
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (k < hold) {
        out.validation[u].push_back(items[k]);
      } else {
        keep.push_back({u, items[k]});
      }
    }
    std::sort(out.validation[u].begin(), out.validation[u].end());
  }
  out.fit = std::make_shared<const InteractionGraph>(
      InteractionGraph::from_edges(train.num_users(), train.num_items(), std::move(keep)));
  return out;
}

Trainer::Trainer(DmicfModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  adam_.config.learning_rate = cfg_.learning_rate;
}

TrainingBatch Trainer::make_batch(std::span<const Edge> positives) {
  TrainingBatch batch;
  batch.positives.assign(positives.begin(), positives.end());
  batch.negatives_per_positive = cfg_.negatives;
  batch.negatives.reserve(positives.size() * cfg_.negatives);
  for (std::size_t k = 0; k < positives.size(); ++k) {
    const auto neg = sample_negatives(rng_, model_.graph().num_items(), cfg_.negatives);
    batch.negatives.insert(batch.negatives.end(), neg.begin(), neg.end());
  }
  return batch;
}

double Trainer::step(const TrainingBatch& batch) {
  ad::Tape tape;
  const BoundModel bound = bind_model(tape, model_.config(), model_.parameters());
  const BatchForward fw =
      batch_loss(tape, model_.config(), model_.graph(), bound, batch, cfg_.temperature);
  const double loss = fw.loss.value()(0, 0);
  if (!std::isfinite(loss)) throw TrainingDivergence("non-finite loss");
  tape.backward(fw.loss);

  const std::vector<ad::Var> vars = parameter_vars(model_.config(), bound);
  auto named = model_.parameters().named();
  if (named.size() != vars.size()) {
    throw std::logic_error("Trainer::step: parameter/gradient count mismatch");
  }
  std::vector<Tensor2*> params;
  std::vector<Tensor2> grads;
  params.reserve(named.size());
  grads.reserve(named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    params.push_back(named[i].second);
    grads.push_back(tape.grad(vars[i]));
  }
  adam_step(adam_, params, grads);
  return loss;
}

TrainResult train(DmicfModel& model, const std::vector<std::vector<std::size_t>>& validation,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  Trainer trainer(model, cfg);
  TrainResult result;
  result.best = model.parameters();

  std::vector<Edge> edges = model.graph().edges();
  const bool has_validation = std::any_of(validation.begin(), validation.end(),
                                          [](const auto& v) { return !v.empty(); });
  if (edges.empty() && cfg.max_epochs > 0) {
    throw std::invalid_argument("train: the training graph has no edges");
  }
  const std::size_t cutoffs[] = {cfg.early_stop_cutoff};
  std::size_t stale_rounds = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(edges.begin(), edges.end(), trainer.rng());
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < edges.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(edges.size(), start + cfg.batch_size);
      const auto batch =
          trainer.make_batch(std::span<const Edge>(edges).subspan(start, end - start));
      try {
        total += trainer.step(batch);
      } catch (const TrainingDivergence&) {
        throw TrainingDivergence("training diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = total / static_cast<double>(edges.size());
    if (has_validation && epoch % cfg.eval_every == 0) {
      const MetricsReport m = evaluate(model, model.graph(), validation, cutoffs);
      const double metric = m.recall.at(cfg.early_stop_cutoff);
      rec.validation_recall = metric;
      if (!result.best_metric || metric > *result.best_metric) {
        result.best_metric = metric;
        result.best = model.parameters();
        result.best_epoch = epoch;
        stale_rounds = 0;
      } else {
        ++stale_rounds;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_parameters) hooks.on_parameters(epoch, model.parameters());
    if (stale_rounds >= cfg.patience) break;
  }

  result.final = model.parameters();
  if (!result.best_metric) {
    result.best = result.final;
    result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
  }
  return result;
}

}  // namespace dmicf
