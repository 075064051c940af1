#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "dmicf/tensor.hpp"
#include "test_util.hpp"

using namespace dmicf;
using namespace dmicf::testing;

TEST(Tensor, IdentityTimesXIsX) {
  std::mt19937_64 rng(1);
  const Tensor2 x = random_tensor(3, 4, rng);
  EXPECT_EQ(matmul(Tensor2::identity(3), x), x);
}

TEST(Tensor, SmallProductByHand) {
  const Tensor2 a = Tensor2::from_rows({{1, 2}, {3, 4}});
  const Tensor2 b = Tensor2::from_rows({{1}, {1}});
  EXPECT_EQ(matmul(a, b), Tensor2::from_rows({{3}, {7}}));
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor2 a = random_tensor(5, 4, rng), b = random_tensor(4, 3, rng);
    const Tensor2 c = matmul(a, b);
    const Mat ref = matmul_loop(to_mat(a), to_mat(b));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(c(i, j), ref[i][j], 1e-12);
  }
}

TEST(Tensor, TransposedKernelsMatchLoops) {
  std::mt19937_64 rng(3);
  const Tensor2 a = random_tensor(7, 5, rng), b = random_tensor(6, 5, rng), c = random_tensor(7, 6, rng);
  Tensor2 nt(7, 6, 1.0);
  gemm_nt_acc(a, b, nt);  // a·bᵀ + 1
  const Mat ref_nt = matmul_loop(to_mat(a), transpose(to_mat(b)));
  Tensor2 tn(5, 6);
  gemm_tn_acc(a, c, tn);  // aᵀ·c
  const Mat ref_tn = matmul_loop(transpose(to_mat(a)), to_mat(c));
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(nt(i, j), ref_nt[i][j] + 1.0, 1e-12);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(tn(i, j), ref_tn[i][j], 1e-12);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor2(2, 3), Tensor2(4, 5));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
  }
}

TEST(Tensor, XavierBoundAndDeterminism) {
  const Tensor2 a = xavier_init(1, 5, 7);
  for (double v : a.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a, xavier_init(1, 5, 7));
  EXPECT_NE(a, xavier_init(1, 5, 8));
}

TEST(Tensor, XavierSampleMeanNearZero) {
  const Tensor2 a = xavier_init(100, 100, 3);
  const double mean = std::accumulate(a.data().begin(), a.data().end(), 0.0) / a.size();
  EXPECT_LT(std::abs(mean), 0.02);
}

TEST(Tensor, ParallelKernelsAgreeWithSerial) {
  std::mt19937_64 rng(4);
  const Tensor2 a = random_tensor(300, 17, rng), b = random_tensor(17, 9, rng);
  set_num_threads(1);
  const Tensor2 serial = matmul(a, b);
  set_num_threads(4);
  const Tensor2 parallel = matmul(a, b);
  set_num_threads(1);
  EXPECT_EQ(serial, parallel);
}

TEST(Tensor, FrobeniusDistance) {
  const Tensor2 a = Tensor2::from_rows({{0, 0}}), b = Tensor2::from_rows({{3, 4}});
  EXPECT_DOUBLE_EQ(frobenius_distance(a, b), 5.0);
  EXPECT_THROW(frobenius_distance(a, Tensor2(2, 2)), DimensionError);
}
