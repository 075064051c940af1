#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmicf/autodiff.hpp"
#include "dmicf/mlp.hpp"
#include "dmicf/tensor.hpp"

namespace dmicf {

enum class AlignmentVariant { kConcatMlp, kGmfMlp, kCrossAttention };
enum class FusionVariant { kSequential, kFlat };
/// Which perspectives feed the fusion input. The single-perspective forms
/// are the w/o-item and w/o-user ablations.
enum class Perspectives { kBoth, kUserOnly, kItemOnly };

std::string_view to_string(AlignmentVariant v);
std::string_view to_string(FusionVariant v);
std::string_view to_string(Perspectives v);
/// Throw std::invalid_argument listing the accepted names.
AlignmentVariant parse_alignment(std::string_view s);
FusionVariant parse_fusion(std::string_view s);
Perspectives parse_perspectives(std::string_view s);

/// Weights of one perspective's alignment encoder. MLP variants use `mlp`;
/// cross-attention uses the three d′×d* projections.
struct AlignmentWeights {
  MlpWeights mlp;
  Tensor2 query;
  Tensor2 key;
  Tensor2 value;
};

struct AlignmentVars {
  MlpVars mlp;
  ad::Var query;
  ad::Var key;
  ad::Var value;
};

AlignmentVars bind_alignment(ad::Tape& tape, AlignmentVariant variant, const AlignmentWeights& w);

/// Interaction-level alignment of paired rows (n×d′, n×d′) → n×d*.
///   concat_mlp:      MLP([h_u ∥ h_v])
///   gmf_mlp:         MLP(h_u ⊙ h_v)
///   cross_attention: softmax((h_u Wq)(h_v Wk)ᵀ/√d*)(h_v Wv), one key per query
/// `mlp_spec` is ignored for cross_attention; `align_dim` is d*.
ad::Var align(AlignmentVariant variant, const MlpSpec& mlp_spec, std::size_t align_dim,
              const AlignmentVars& w, ad::Var h_u, ad::Var h_v);

std::vector<double> align(AlignmentVariant variant, const MlpSpec& mlp_spec,
                          std::size_t align_dim, const AlignmentWeights& w,
                          std::span<const double> h_u, std::span<const double> h_v);

/// (cos(z_u, e_v), cos(z_v, e_u)) with the zero-norm convention.
std::pair<double, double> local_similarity(std::span<const double> z_u, std::span<const double> e_v,
                                           std::span<const double> z_v, std::span<const double> e_u);

struct InteractionEncoding {
  std::vector<double> t_user;
  std::vector<double> t_item;
  double s_user = 0.0;
  double s_item = 0.0;
};

/// Width of the fused vector: 2d*+2 flat, d*+2 sequential, d*+1 when only
/// one perspective is kept.
std::size_t fused_width(FusionVariant fusion, Perspectives perspectives, std::size_t align_dim);

/// flat:       [t_u ∥ t_v ∥ s_u ∥ s_v]
/// sequential: [(t_u + t_v) ∥ s_u ∥ s_v]
/// single perspective (either fusion): [t ∥ s] of the kept side.
std::vector<double> fuse(FusionVariant fusion, Perspectives perspectives,
                         const InteractionEncoding& enc);

/// Batched fusion. Vars for a dropped perspective are ignored.
ad::Var fuse(FusionVariant fusion, Perspectives perspectives, std::optional<ad::Var> t_user,
             std::optional<ad::Var> t_item, std::optional<ad::Var> s_user,
             std::optional<ad::Var> s_item);

/// Raw relevance score from the prediction MLP (identity output).
double predict_raw(std::span<const double> fused, const MlpSpec& predict_spec,
                   const MlpWeights& predict_weights);

}  // namespace dmicf
