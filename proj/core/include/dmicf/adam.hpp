#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmicf/tensor.hpp"

namespace dmicf {

struct AdamConfig {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer state. Moments are created on the
/// first step, one pair per parameter, in the order parameters are passed.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor2> first_moment;
  std::vector<Tensor2> second_moment;
  std::uint64_t step = 0;
};

/// One in-place update of every parameter. Throws DimensionError if a
/// gradient or moment does not match its parameter.
void adam_step(AdamState& state, std::span<Tensor2* const> params,
               std::span<const Tensor2> grads);

}  // namespace dmicf
