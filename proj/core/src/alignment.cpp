#include "dmicf/alignment.hpp"

#include <cmath>
#include <stdexcept>

#include "dmicf/intent.hpp"

namespace dmicf {

std::string_view to_string(AlignmentVariant v) {
  switch (v) {
    case AlignmentVariant::kConcatMlp: return "concat_mlp";
    case AlignmentVariant::kGmfMlp: return "gmf_mlp";
    case AlignmentVariant::kCrossAttention: return "cross_attention";
  }
  return "?";
}

std::string_view to_string(FusionVariant v) {
  return v == FusionVariant::kFlat ? "flat" : "sequential";
}

std::string_view to_string(Perspectives v) {
  switch (v) {
    case Perspectives::kBoth: return "both";
    case Perspectives::kUserOnly: return "user_only";
    case Perspectives::kItemOnly: return "item_only";
  }
  return "?";
}

AlignmentVariant parse_alignment(std::string_view s) {
  if (s == "concat_mlp") return AlignmentVariant::kConcatMlp;
  if (s == "gmf_mlp") return AlignmentVariant::kGmfMlp;
  if (s == "cross_attention") return AlignmentVariant::kCrossAttention;
  throw std::invalid_argument("alignment must be concat_mlp|gmf_mlp|cross_attention, got '" +
                              std::string(s) + "'");
}

FusionVariant parse_fusion(std::string_view s) {
  if (s == "flat") return FusionVariant::kFlat;
  if (s == "sequential") return FusionVariant::kSequential;
  throw std::invalid_argument("fusion must be sequential|flat, got '" + std::string(s) + "'");
}

Perspectives parse_perspectives(std::string_view s) {
  if (s == "both") return Perspectives::kBoth;
  if (s == "user_only") return Perspectives::kUserOnly;
  if (s == "item_only") return Perspectives::kItemOnly;
  throw std::invalid_argument("perspectives must be both|user_only|item_only, got '" +
                              std::string(s) + "'");
}

AlignmentVars bind_alignment(ad::Tape& tape, AlignmentVariant variant, const AlignmentWeights& w) {
  AlignmentVars v;
  if (variant == AlignmentVariant::kCrossAttention) {
    v.query = tape.parameter(w.query);
    v.key = tape.parameter(w.key);
    v.value = tape.parameter(w.value);
  } else {
    v.mlp = bind_mlp(tape, w.mlp);
  }
  return v;
}

ad::Var align(AlignmentVariant variant, const MlpSpec& mlp_spec, std::size_t align_dim,
              const AlignmentVars& w, ad::Var h_u, ad::Var h_v) {
  if (h_u.rows() != h_v.rows() || h_u.cols() != h_v.cols()) {
    throw DimensionError(std::string(to_string(variant)) + ": intent embeddings " +
                         h_u.value().shape_string() + " and " + h_v.value().shape_string() +
                         " do not pair up");
  }
  switch (variant) {
    case AlignmentVariant::kConcatMlp: {
      const ad::Var parts[] = {h_u, h_v};
      const ad::Var joined = ad::concat_cols(parts);
      if (joined.cols() != mlp_spec.input_width()) {
        throw DimensionError("concat_mlp: concatenated width " + std::to_string(joined.cols()) +
                             " does not match MLP " + mlp_spec.to_string());
      }
      return mlp_forward(mlp_spec, w.mlp, joined);
    }
    case AlignmentVariant::kGmfMlp: {
      if (h_u.cols() != mlp_spec.input_width()) {
        throw DimensionError("gmf_mlp: intent width " + std::to_string(h_u.cols()) +
                             " does not match MLP " + mlp_spec.to_string());
      }
      return mlp_forward(mlp_spec, w.mlp, ad::mul(h_u, h_v));
    }
    case AlignmentVariant::kCrossAttention: {
      if (w.query.rows() != h_u.cols() || w.query.cols() != align_dim) {
        throw DimensionError("cross_attention: projection " + w.query.value().shape_string() +
                             " does not map width " + std::to_string(h_u.cols()) + " to " +
                             std::to_string(align_dim));
      }
      const ad::Var q = ad::matmul(h_u, w.query);
      const ad::Var k = ad::matmul(h_v, w.key);
      const ad::Var v = ad::matmul(h_v, w.value);
      // One key per query: the attention axis has length 1.
      const ad::Var logits =
          ad::scale(ad::row_dot(q, k), 1.0 / std::sqrt(static_cast<double>(align_dim)));
      const ad::Var attn = ad::softmax_rows(logits, 1.0);
      return ad::row_scale(attn, v);
    }
  }
  throw std::logic_error("align: unknown variant");
}

std::vector<double> align(AlignmentVariant variant, const MlpSpec& mlp_spec,
                          std::size_t align_dim, const AlignmentWeights& w,
                          std::span<const double> h_u, std::span<const double> h_v) {
  ad::Tape tape(false);
  const AlignmentVars vars = bind_alignment(tape, variant, w);
  return align(variant, mlp_spec, align_dim, vars, tape.constant(Tensor2::row_vector(h_u)),
               tape.constant(Tensor2::row_vector(h_v)))
      .value()
      .data();
}

std::pair<double, double> local_similarity(std::span<const double> z_u, std::span<const double> e_v,
                                           std::span<const double> z_v,
                                           std::span<const double> e_u) {
  return {cosine(z_u, e_v), cosine(z_v, e_u)};
}

std::size_t fused_width(FusionVariant fusion, Perspectives perspectives, std::size_t align_dim) {
  if (perspectives != Perspectives::kBoth) return align_dim + 1;
  return fusion == FusionVariant::kFlat ? 2 * align_dim + 2 : align_dim + 2;
}

std::vector<double> fuse(FusionVariant fusion, Perspectives perspectives,
                         const InteractionEncoding& enc) {
  ad::Tape tape(false);
  auto row = [&tape](std::span<const double> v) { return tape.constant(Tensor2::row_vector(v)); };
  auto scalar = [&tape](double v) { return tape.constant(Tensor2(1, 1, v)); };
  return fuse(fusion, perspectives, row(enc.t_user), row(enc.t_item), scalar(enc.s_user),
              scalar(enc.s_item))
      .value()
      .data();
}

ad::Var fuse(FusionVariant fusion, Perspectives perspectives, std::optional<ad::Var> t_user,
             std::optional<ad::Var> t_item, std::optional<ad::Var> s_user,
             std::optional<ad::Var> s_item) {
  auto need = [](const std::optional<ad::Var>& v, const char* what) {
    if (!v) throw std::invalid_argument(std::string("fuse: missing ") + what);
    return *v;
  };
  switch (perspectives) {
    case Perspectives::kUserOnly: {
      const ad::Var parts[] = {need(t_user, "t_user"), need(s_user, "s_user")};
      return ad::concat_cols(parts);
    }
    case Perspectives::kItemOnly: {
      const ad::Var parts[] = {need(t_item, "t_item"), need(s_item, "s_item")};
      return ad::concat_cols(parts);
    }
    case Perspectives::kBoth: break;
  }
  const ad::Var tu = need(t_user, "t_user");
  const ad::Var tv = need(t_item, "t_item");
  const ad::Var su = need(s_user, "s_user");
  const ad::Var sv = need(s_item, "s_item");
  if (fusion == FusionVariant::kFlat) {
    const ad::Var parts[] = {tu, tv, su, sv};
    return ad::concat_cols(parts);
  }
  const ad::Var parts[] = {ad::add(tu, tv), su, sv};
  return ad::concat_cols(parts);
}

double predict_raw(std::span<const double> fused, const MlpSpec& predict_spec,
                   const MlpWeights& predict_weights) {
  if (fused.size() != predict_spec.input_width()) {
    throw DimensionError("predict: fused width " + std::to_string(fused.size()) +
                         " does not match MLP " + predict_spec.to_string());
  }
  return mlp_forward(predict_spec, predict_weights, Tensor2::row_vector(fused))(0, 0);
}

}  // namespace dmicf
