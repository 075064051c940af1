#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmicf/autodiff.hpp"
#include "dmicf/tensor.hpp"

namespace dmicf {

enum class Activation { kSigmoid, kIdentity };

/// Layer widths input → hidden… → output. Hidden layers are always sigmoid;
/// the output layer uses `output_activation`.
struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  Activation output_activation = Activation::kSigmoid;

  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }

  /// Throws std::invalid_argument unless there are ≥ 2 widths, all ≥ 1.
  void validate() const;
  std::string to_string() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Tensor2 weight;  // in × out
  Tensor2 bias;    // 1 × out
};

struct MlpWeights {
  std::vector<DenseLayer> layers;
};

/// Xavier-uniform weights, zero biases. Layer l draws from seed + l.
MlpWeights init_mlp(const MlpSpec& spec, std::uint64_t seed);
MlpWeights zero_mlp(const MlpSpec& spec);

/// Checks every weight against the layer widths; the error names the layer index.
void check_mlp_weights(const MlpSpec& spec, const MlpWeights& weights);

/// Weights bound to a tape.
struct MlpVars {
  std::vector<ad::Var> weight;
  std::vector<ad::Var> bias;
};

MlpVars bind_mlp(ad::Tape& tape, const MlpWeights& weights);

/// y = act(x·W + b) layer by layer on the tape.
ad::Var mlp_forward(const MlpSpec& spec, const MlpVars& vars, ad::Var x);

/// Plain evaluation (no gradients).
Tensor2 mlp_forward(const MlpSpec& spec, const MlpWeights& weights, const Tensor2& x);

}  // namespace dmicf
