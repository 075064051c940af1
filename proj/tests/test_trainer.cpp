#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dmicf/trainer.hpp"
#include "test_util.hpp"

using namespace dmicf;
using namespace dmicf::testing;

TEST(Sampling, SingleItemCatalogue) {
  Rng rng(1);
  for (std::size_t v : sample_negatives(rng, 1, 7)) EXPECT_EQ(v, 0u);
}

TEST(Sampling, ResetRngReproduces) {
  Rng a(9), b(9);
  EXPECT_EQ(sample_negatives(a, 50, 20), sample_negatives(b, 50, 20));
}

TEST(Sampling, UniformFrequenciesWithinThreeSigma) {
  Rng rng(3);
  const auto draws = sample_negatives(rng, 10, 10000);
  std::vector<int> counts(10, 0);
  for (std::size_t v : draws) ++counts.at(v);
  const double sigma = std::sqrt(10000 * 0.1 * 0.9);
  for (int c : counts) EXPECT_LT(std::abs(c - 1000.0), 3 * sigma);
}

TEST(NormalizeScores, SymmetricCases) {
  const double neg1[] = {0.7};
  EXPECT_NEAR(normalize_scores(0.7, neg1, 0.2).pos_prob, 0.5, 1e-15);
  const double neg3[] = {1.2, 1.2, 1.2};
  EXPECT_NEAR(normalize_scores(1.2, neg3, 0.2).pos_prob, 0.25, 1e-15);
}

TEST(NormalizeScores, TemperatureExample) {
  const double neg[] = {0.0};
  const auto s = normalize_scores(1.0, neg, 0.2);
  EXPECT_NEAR(s.pos_prob, std::exp(5.0) / (std::exp(5.0) + 1.0), 1e-15);
  EXPECT_NEAR(s.pos_prob, 0.993307, 1e-6);
  EXPECT_NEAR(s.pos_prob + s.neg_probs[0], 1.0, 1e-15);
}

TEST(Loss, Examples) {
  const NormalizedScores perfect{1.0, {0.0, 0.0}};
  EXPECT_EQ(multi_negative_loss(std::span(&perfect, 1)), 0.0);
  const NormalizedScores even{0.5, {0.5}};
  EXPECT_DOUBLE_EQ(multi_negative_loss(std::span(&even, 1)), 0.5);
}

TEST(Loss, BatchLossMatchesScalarLoop) {
  std::mt19937_64 rng(4);
  auto graph = std::make_shared<const InteractionGraph>(random_graph(5, 6, 0.5, rng));
  const ModelConfig cfg = tiny_config(AlignmentVariant::kGmfMlp, FusionVariant::kFlat);
  const DmicfModel model(cfg, graph, 5);
  TrainingBatch batch;
  batch.positives = {{0, 1}, {3, 2}, {0, 5}};
  batch.negatives = {0, 4, 2, 2, 1, 3};
  batch.negatives_per_positive = 2;

  ad::Tape tape;
  const BoundModel bound = bind_model(tape, cfg, model.parameters());
  const BatchForward fw = batch_loss(tape, cfg, *graph, bound, batch, 0.2);

  double expected = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const Edge e = batch.positives[k];
    const double pos = oracle_score(cfg, model.parameters(), *graph, e.user, e.item);
    Vec negs;
    for (std::size_t j = 0; j < 2; ++j)
      negs.push_back(oracle_score(cfg, model.parameters(), *graph, e.user, batch.negatives[k * 2 + j]));
    double denom = std::exp(pos / 0.2);
    for (double n : negs) denom += std::exp(n / 0.2);
    expected += std::pow(1.0 - std::exp(pos / 0.2) / denom, 2);
    for (double n : negs) expected += std::pow(std::exp(n / 0.2) / denom, 2);
  }
  EXPECT_NEAR(fw.loss.value()(0, 0), expected, 1e-10);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto row = fw.probabilities.value().row(k);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(ValidationSplit, DeterministicAndDisjoint) {
  std::mt19937_64 rng(5);
  const InteractionGraph g = random_graph(30, 40, 0.3, rng);
  const ValidationSplit a = split_validation(g, 0.2, 11);
  const ValidationSplit b = split_validation(g, 0.2, 11);
  EXPECT_EQ(a.validation, b.validation);
  std::size_t held = 0;
  for (std::size_t u = 0; u < 30; ++u) {
    held += a.validation[u].size();
    for (std::size_t i : a.validation[u]) {
      EXPECT_TRUE(g.has_edge(u, i));
      EXPECT_FALSE(a.fit->has_edge(u, i));
    }
    if (g.user_degree(u) > 0) {
      EXPECT_GE(a.fit->user_degree(u), 1u);
    }
  }
  EXPECT_EQ(held + a.fit->num_edges(), g.num_edges());
}

namespace {

struct Fixture {
  std::shared_ptr<const InteractionGraph> graph;
  std::vector<std::vector<std::size_t>> validation;
};

Fixture small_problem() {
  std::mt19937_64 rng(6);
  const InteractionGraph g = random_graph(12, 10, 0.4, rng);
  ValidationSplit s = split_validation(g, 0.2, 1);
  return {s.fit, s.validation};
}

TrainConfig quick() {
  TrainConfig t;
  t.negatives = 3;
  t.batch_size = 8;
  t.learning_rate = 1e-2;
  t.max_epochs = 4;
  t.patience = 10;
  t.early_stop_cutoff = 5;
  return t;
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialisation) {
  const Fixture f = small_problem();
  const ModelConfig cfg = tiny_config(AlignmentVariant::kGmfMlp, FusionVariant::kFlat);
  DmicfModel model(cfg, f.graph, 3);
  const auto init = model.parameters().to_checkpoint();
  TrainConfig t = quick();
  t.max_epochs = 0;
  const TrainResult r = train(model, f.validation, t);
  EXPECT_TRUE(r.history.empty());
  const auto best = r.best.to_checkpoint();
  for (std::size_t k = 0; k < init.size(); ++k) EXPECT_EQ(best[k].value, init[k].value);
}

TEST(Train, SeededRunsAreIdentical) {
  const Fixture f = small_problem();
  const ModelConfig cfg = tiny_config(AlignmentVariant::kConcatMlp, FusionVariant::kSequential);
  auto run = [&] {
    DmicfModel model(cfg, f.graph, 3);
    return train(model, f.validation, quick());
  };
  const TrainResult a = run(), b = run();
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].mean_loss, b.history[k].mean_loss);
    EXPECT_EQ(a.history[k].validation_recall, b.history[k].validation_recall);
  }
  const auto pa = a.final.to_checkpoint(), pb = b.final.to_checkpoint();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k].value, pb[k].value);
}

TEST(Train, PatienceStopsEarly) {
  const Fixture f = small_problem();
  const ModelConfig cfg = tiny_config(AlignmentVariant::kGmfMlp, FusionVariant::kFlat);
  DmicfModel model(cfg, f.graph, 3);
  TrainConfig t = quick();
  t.max_epochs = 50;
  t.patience = 1;
  const TrainResult r = train(model, f.validation, t);
  ASSERT_FALSE(r.history.empty());
  EXPECT_LT(r.history.size(), 50u);
  EXPECT_EQ(r.history.back().epoch, r.best_epoch + 1);
}

TEST(Train, GradientFlowReachesEveryGroup) {
  const Fixture f = small_problem();
  for (auto a : {AlignmentVariant::kConcatMlp, AlignmentVariant::kGmfMlp,
                 AlignmentVariant::kCrossAttention}) {
    const ModelConfig cfg = tiny_config(a, FusionVariant::kFlat);
    DmicfModel model(cfg, f.graph, 3);
    const auto before = model.parameters().to_checkpoint();
    Trainer trainer(model, quick());
    const auto edges = f.graph->edges();
    trainer.step(trainer.make_batch(edges));
    const auto after = model.parameters().to_checkpoint();
    for (std::size_t k = 0; k < before.size(); ++k) {
      const std::string& name = before[k].name;
      // Attention over a single key is constant: query, key and the user-side
      // intent encoders that only feed the query receive no gradient. The
      // output bias shifts every candidate equally and cancels in the softmax.
      const bool attention_only = name.ends_with(".query") || name.ends_with(".key") ||
                                  name.starts_with("intent.user_user") ||
                                  name.starts_with("intent.item_user");
      if (name == "predict.layer1.bias") continue;
      const bool frozen = a == AlignmentVariant::kCrossAttention && attention_only;
      if (frozen) {
        EXPECT_EQ(before[k].value, after[k].value) << name;
      } else {
        EXPECT_NE(before[k].value, after[k].value) << name;
      }
    }
  }
}

TEST(Train, DivergenceNamesEpochAndBatch) {
  const Fixture f = small_problem();
  const ModelConfig cfg = tiny_config(AlignmentVariant::kGmfMlp, FusionVariant::kFlat);
  ModelParameters p = init_parameters(cfg, f.graph->num_users(), f.graph->num_items(), 1);
  p.predict.layers[0].bias(0, 0) = std::nan("");
  DmicfModel model(cfg, f.graph, p);
  try {
    train(model, f.validation, quick());
    FAIL();
  } catch (const TrainingDivergence& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.temperature = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.validation_fraction = 1.0;
  EXPECT_THROW(t.validate(), ConfigError);
}
