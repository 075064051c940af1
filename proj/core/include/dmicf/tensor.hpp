#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmicf {

/// Raised when operand shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Every matrix in the model (embeddings,
/// prototypes, MLP weights, activations) is carried in one of these.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Row-major literal, e.g. Tensor2::from_rows({{1, 2}, {3, 4}}).
  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2 identity(std::size_t n);
  static Tensor2 row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  std::string shape_string() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a · b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);

// Kernels used by the tape. `out` must already have the result shape; the
// product is accumulated into it.
void gemm_nn_acc(const Tensor2& a, const Tensor2& b, Tensor2& out);  // out += a · b
void gemm_nt_acc(const Tensor2& a, const Tensor2& b, Tensor2& out);  // out += a · bᵀ
void gemm_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& out);  // out += aᵀ · b

/// Xavier/Glorot uniform: U(-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))).
Tensor2 xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

double frobenius_distance(const Tensor2& a, const Tensor2& b);

/// Kernel-level thread count. 1 is the deterministic reference mode; row
/// partitioning keeps results bitwise identical for any value.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs fn(begin, end) over contiguous slices of [0, n) on up to
/// num_threads() threads. Each index is visited exactly once.
void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace dmicf
