#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmicf/alignment.hpp"
#include "dmicf/autodiff.hpp"
#include "dmicf/checkpoint.hpp"
#include "dmicf/graph.hpp"
#include "dmicf/intent.hpp"
#include "dmicf/mlp.hpp"

namespace dmicf {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture hyperparameters. Defaults are the published configuration:
/// intent MLP [32,48,80], alignment MLP [80,128,64,16], prediction MLP
/// [34,32,1] with GMF alignment and flat fusion.
struct ModelConfig {
  std::size_t embed_dim = 32;       // d
  std::size_t num_prototypes = 32;  // K
  std::size_t intent_dim = 80;      // d′
  std::size_t align_dim = 16;       // d*
  std::size_t intent_hidden = 48;   // h
  std::size_t align_hidden1 = 128;  // h1
  std::size_t align_hidden2 = 64;   // h2
  std::size_t predict_hidden = 32;  // h3
  AlignmentVariant alignment = AlignmentVariant::kGmfMlp;
  FusionVariant fusion = FusionVariant::kFlat;
  Perspectives perspectives = Perspectives::kBoth;

  MlpSpec intent_mlp_spec() const;   // [K, h, d′], sigmoid output
  MlpSpec align_mlp_spec() const;    // [d′ (2d′ for concat), h1, h2, d*], sigmoid output
  MlpSpec predict_mlp_spec() const;  // [fused, h3, 1], identity output
  std::size_t fused_width() const;

  bool uses_user_perspective() const { return perspectives != Perspectives::kItemOnly; }
  bool uses_item_perspective() const { return perspectives != Perspectives::kUserOnly; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// All learnable state.
struct ModelParameters {
  Tensor2 user_embedding;   // E^u  M×d
  Tensor2 item_embedding;   // E^v  N×d
  Tensor2 user_prototypes;  // C^u  K×d
  Tensor2 item_prototypes;  // C^v  K×d
  IntentMlpWeights intent;
  std::optional<AlignmentWeights> align_user;  // absent under item_only
  std::optional<AlignmentWeights> align_item;  // absent under user_only
  MlpWeights predict;

  /// (name, tensor) in a fixed order; see docs/formats.md for the names.
  std::vector<std::pair<std::string, Tensor2*>> named();
  std::vector<std::pair<std::string, const Tensor2*>> named() const;

  std::vector<NamedTensor> to_checkpoint() const;
  /// Copies tensors in by name. Throws CheckpointError on a missing,
  /// unexpected or mis-shaped tensor.
  void load_checkpoint(const std::vector<NamedTensor>& tensors);
};

/// Xavier-uniform embeddings, prototypes and weights; zero biases.
ModelParameters init_parameters(const ModelConfig& cfg, std::size_t num_users,
                                std::size_t num_items, std::uint64_t seed);

/// Parameters bound to a tape.
struct BoundModel {
  ad::Var user_embedding;
  ad::Var item_embedding;
  ad::Var user_prototypes;
  ad::Var item_prototypes;
  IntentMlpVars intent;
  std::optional<AlignmentVars> align_user;
  std::optional<AlignmentVars> align_item;
  MlpVars predict;
};

BoundModel bind_model(ad::Tape& tape, const ModelConfig& cfg, const ModelParameters& params);

/// Bound variables in the same order as ModelParameters::named().
std::vector<ad::Var> parameter_vars(const ModelConfig& cfg, const BoundModel& model);

/// Entity-level representations for a subset of users and items; row r
/// belongs to users[r] / items[r] of the lists passed to encode_entities.
struct EntityBlock {
  ad::Var z_user, e_user, h_user, h_user_x;
  ad::Var z_item, e_item, h_item, h_item_x;
};

EntityBlock encode_entities(const ModelConfig& cfg, const InteractionGraph& graph,
                            const BoundModel& model, std::span<const std::size_t> users,
                            std::span<const std::size_t> items);

/// Raw relevance of each (user_rows[p], item_rows[p]) pair, P×1. Row
/// indices refer to the EntityBlock.
ad::Var score_pairs(const ModelConfig& cfg, const BoundModel& model, const EntityBlock& block,
                    std::span<const std::size_t> user_rows, std::span<const std::size_t> item_rows);

/// Plain per-entity encodings for every user and item.
struct EntityEncodings {
  Tensor2 z_user, e_user, h_user, h_user_x;
  Tensor2 z_item, e_item, h_item, h_item_x;
};

/// A configuration, the graph it propagates over, and its parameters.
class DmicfModel {
 public:
  DmicfModel(ModelConfig cfg, std::shared_ptr<const InteractionGraph> graph, std::uint64_t seed);
  DmicfModel(ModelConfig cfg, std::shared_ptr<const InteractionGraph> graph,
             ModelParameters params);

  const ModelConfig& config() const noexcept { return cfg_; }
  const InteractionGraph& graph() const noexcept { return *graph_; }
  std::shared_ptr<const InteractionGraph> graph_ptr() const noexcept { return graph_; }
  ModelParameters& parameters() noexcept { return params_; }
  const ModelParameters& parameters() const noexcept { return params_; }

  EntityEncodings encode_all() const;
  /// Raw scores of `items` for `user`, via the full forward pipeline.
  std::vector<double> score(std::size_t user, std::span<const std::size_t> items) const;

 private:
  ModelConfig cfg_;
  std::shared_ptr<const InteractionGraph> graph_;
  ModelParameters params_;
};

/// Scores pairs against precomputed encodings. Cheaper than
/// DmicfModel::score when ranking many users.
std::vector<double> score_with_encodings(const ModelConfig& cfg, const ModelParameters& params,
                                         const EntityEncodings& enc, std::size_t user,
                                         std::span<const std::size_t> items);

}  // namespace dmicf
