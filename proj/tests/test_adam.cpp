#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dmicf/adam.hpp"
#include "test_util.hpp"

using namespace dmicf;
using namespace dmicf::testing;

TEST(Adam, ZeroGradientLeavesParametersAndMoments) {
  std::mt19937_64 rng(1);
  Tensor2 p = random_tensor(3, 2, rng);
  const Tensor2 before = p;
  AdamState state;
  Tensor2* params[] = {&p};
  const Tensor2 grads[] = {Tensor2(3, 2)};
  adam_step(state, params, grads);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1u);
  EXPECT_EQ(state.first_moment[0], Tensor2(3, 2));
  EXPECT_EQ(state.second_moment[0], Tensor2(3, 2));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor2 p(2, 2, 1.0);
  AdamState state;
  state.config.learning_rate = 0.01;
  Tensor2* params[] = {&p};
  const Tensor2 grads[] = {Tensor2::from_rows({{0.5, -2.0}, {3.0, -1e-3}})};
  adam_step(state, params, grads);
  // m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε).
  for (std::size_t i = 0; i < 4; ++i) {
    const double g = grads[0].data()[i];
    const double expected = 1.0 - 0.01 * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(p.data()[i], expected, 1e-15);
    EXPECT_NEAR(std::abs(p.data()[i] - 1.0), 0.01, 1e-6);
  }
}

TEST(Adam, MatchesScalarRecurrence) {
  std::mt19937_64 rng(2);
  Tensor2 p = random_tensor(1, 3, rng);
  Vec ref(p.data());
  Vec m(3, 0.0), v(3, 0.0);
  AdamState state;
  state.config.learning_rate = 0.05;
  for (int t = 1; t <= 10; ++t) {
    const Tensor2 g = random_tensor(1, 3, rng);
    Tensor2* params[] = {&p};
    adam_step(state, params, std::span<const Tensor2>(&g, 1));
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g.data()[i];
      v[i] = 0.999 * v[i] + 0.001 * g.data()[i] * g.data()[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.data()[i], ref[i], 1e-12);
    }
  }
}

TEST(Adam, IdenticalRunsAreIdentical) {
  auto run = [] {
    std::mt19937_64 rng(3);
    Tensor2 p = random_tensor(4, 4, rng);
    AdamState state;
    for (int t = 0; t < 5; ++t) {
      const Tensor2 g = random_tensor(4, 4, rng);
      Tensor2* params[] = {&p};
      adam_step(state, params, std::span<const Tensor2>(&g, 1));
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor2 p(2, 2);
  AdamState state;
  Tensor2* params[] = {&p};
  const Tensor2 grads[] = {Tensor2(2, 3)};
  EXPECT_THROW(adam_step(state, params, grads), DimensionError);
}
