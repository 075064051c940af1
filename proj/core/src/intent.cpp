#include "dmicf/intent.hpp"

#include <string>

namespace dmicf {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  ad::Tape tape(false);
  const auto ta = tape.constant(Tensor2::row_vector(a));
  const auto tb = tape.constant(Tensor2::row_vector(b));
  return ad::cosine_rows(ta, tb).value()(0, 0);
}

std::vector<double> intent_distribution(std::span<const double> x, const Tensor2& prototypes) {
  ad::Tape tape(false);
  const Tensor2 out = intent_distributions(tape.constant(Tensor2::row_vector(x)),
                                           tape.constant(prototypes))
                          .value();
  return out.data();
}

ad::Var intent_distributions(ad::Var x, ad::Var prototypes) {
  return ad::cosine_matrix(x, prototypes);
}

IntentMlpVars bind_intent_mlps(ad::Tape& tape, const IntentMlpWeights& w) {
  return {bind_mlp(tape, w.user_user), bind_mlp(tape, w.user_item), bind_mlp(tape, w.item_user),
          bind_mlp(tape, w.item_item)};
}

ad::Var encode_user_side(const MlpSpec& spec, const MlpVars& mlp, ad::Var distribution) {
  // Sigmoid outputs are strictly positive, so the row sums are too.
  return ad::l1_normalize_rows(mlp_forward(spec, mlp, distribution));
}

ad::Var encode_item_side(const MlpSpec& spec, const MlpVars& mlp, ad::Var distribution) {
  return mlp_forward(spec, mlp, distribution);
}

IntentEmbeddings encode_intents(const IntentDistributions& dists, const MlpSpec& spec,
                                const IntentMlpWeights& weights) {
  for (const MlpWeights* w :
       {&weights.user_user, &weights.user_item, &weights.item_user, &weights.item_item}) {
    check_mlp_weights(spec, *w);
  }
  ad::Tape tape(false);
  const IntentMlpVars vars = bind_intent_mlps(tape, weights);
  IntentEmbeddings out;
  out.h_user = encode_user_side(spec, vars.user_user, tape.constant(dists.p_user)).value();
  out.h_item = encode_item_side(spec, vars.user_item, tape.constant(dists.p_item)).value();
  out.h_user_x = encode_user_side(spec, vars.item_user, tape.constant(dists.p_user_x)).value();
  out.h_item_x = encode_item_side(spec, vars.item_item, tape.constant(dists.p_item_x)).value();
  return out;
}

}  // namespace dmicf
