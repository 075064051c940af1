#pragma once

#include <span>
#include <vector>

#include "dmicf/autodiff.hpp"
#include "dmicf/mlp.hpp"
#include "dmicf/tensor.hpp"

namespace dmicf {

/// Cosine similarity; 0 when either vector has norm below 1e-12.
double cosine(std::span<const double> a, std::span<const double> b);

/// Entry k = cosine(x, prototypes row k).
std::vector<double> intent_distribution(std::span<const double> x, const Tensor2& prototypes);

/// Batched form on the tape: (n×d, K×d) → n×K.
ad::Var intent_distributions(ad::Var x, ad::Var prototypes);

/// Prototype scores, one row per entity.
///   p_user   = cos(Z^u, C^u)   p_item   = cos(E^v, C^u)
///   p_user_x = cos(E^u, C^v)   p_item_x = cos(Z^v, C^v)
struct IntentDistributions {
  Tensor2 p_user;
  Tensor2 p_item;
  Tensor2 p_user_x;
  Tensor2 p_item_x;
};

/// Outputs of the four intent MLPs. User-side rows lie on the simplex;
/// item-side rows are raw sigmoid activations.
struct IntentEmbeddings {
  Tensor2 h_user;
  Tensor2 h_item;
  Tensor2 h_user_x;
  Tensor2 h_item_x;
};

/// The four independently parameterised intent MLPs, all sharing one spec.
struct IntentMlpWeights {
  MlpWeights user_user;  // p_user   → h_user
  MlpWeights user_item;  // p_item   → h_item
  MlpWeights item_user;  // p_user_x → h_user_x
  MlpWeights item_item;  // p_item_x → h_item_x
};

struct IntentMlpVars {
  MlpVars user_user;
  MlpVars user_item;
  MlpVars item_user;
  MlpVars item_item;
};

IntentMlpVars bind_intent_mlps(ad::Tape& tape, const IntentMlpWeights& w);

/// MLP followed by row-wise ℓ1 normalisation.
ad::Var encode_user_side(const MlpSpec& spec, const MlpVars& mlp, ad::Var distribution);
ad::Var encode_item_side(const MlpSpec& spec, const MlpVars& mlp, ad::Var distribution);

IntentEmbeddings encode_intents(const IntentDistributions& dists, const MlpSpec& spec,
                                const IntentMlpWeights& weights);

}  // namespace dmicf
