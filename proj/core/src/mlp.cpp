#include "dmicf/mlp.hpp"

#include <sstream>
#include <stdexcept>

namespace dmicf {

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  }
  for (std::size_t w : layer_widths) {
    if (w == 0) throw std::invalid_argument("MlpSpec: widths must be >= 1 in " + to_string());
  }
}

std::string MlpSpec::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (i) os << ',';
    os << layer_widths[i];
  }
  os << ']';
  return os.str();
}

MlpWeights init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  MlpWeights w;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    w.layers.push_back({xavier_init(in, out, seed + l), Tensor2(1, out)});
  }
  return w;
}

MlpWeights zero_mlp(const MlpSpec& spec) {
  spec.validate();
  MlpWeights w;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    w.layers.push_back({Tensor2(in, out), Tensor2(1, out)});
  }
  return w;
}

void check_mlp_weights(const MlpSpec& spec, const MlpWeights& weights) {
  spec.validate();
  if (weights.layers.size() != spec.num_layers()) {
    throw DimensionError("mlp: spec " + spec.to_string() + " has " +
                         std::to_string(spec.num_layers()) + " layers, weights have " +
                         std::to_string(weights.layers.size()));
  }
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto& layer = weights.layers[l];
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    if (layer.weight.rows() != in || layer.weight.cols() != out || layer.bias.rows() != 1 ||
        layer.bias.cols() != out) {
      throw DimensionError("mlp layer " + std::to_string(l) + ": expected weight " +
                           std::to_string(in) + "x" + std::to_string(out) + ", got " +
                           layer.weight.shape_string() + " (bias " +
                           layer.bias.shape_string() + ")");
    }
  }
}

MlpVars bind_mlp(ad::Tape& tape, const MlpWeights& weights) {
  MlpVars v;
  for (const auto& layer : weights.layers) {
    v.weight.push_back(tape.parameter(layer.weight));
    v.bias.push_back(tape.parameter(layer.bias));
  }
  return v;
}

ad::Var mlp_forward(const MlpSpec& spec, const MlpVars& vars, ad::Var x) {
  if (vars.weight.size() != spec.num_layers()) {
    throw DimensionError("mlp: expected " + std::to_string(spec.num_layers()) +
                         " layers, bound " + std::to_string(vars.weight.size()));
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (h.cols() != vars.weight[l].rows()) {
      throw DimensionError("mlp layer " + std::to_string(l) + ": input width " +
                           std::to_string(h.cols()) + " does not match weight " +
                           vars.weight[l].value().shape_string());
    }
    h = ad::add_bias(ad::matmul(h, vars.weight[l]), vars.bias[l]);
    const bool last = l + 1 == spec.num_layers();
    if (!last || spec.output_activation == Activation::kSigmoid) h = ad::sigmoid(h);
  }
  return h;
}

Tensor2 mlp_forward(const MlpSpec& spec, const MlpWeights& weights, const Tensor2& x) {
  check_mlp_weights(spec, weights);
  if (x.cols() != spec.input_width()) {
    throw DimensionError("mlp layer 0: input width " + std::to_string(x.cols()) +
                         " does not match " + spec.to_string());
  }
  ad::Tape tape(false);
  const MlpVars vars = bind_mlp(tape, weights);
  return mlp_forward(spec, vars, tape.constant(x)).value();
}

}  // namespace dmicf
