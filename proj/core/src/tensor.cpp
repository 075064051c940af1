#include "dmicf/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

namespace dmicf {

namespace {

std::atomic<unsigned> g_threads{1};

// Rows below this count are never split across threads.
constexpr std::size_t kParallelGrain = 64;

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Tensor2: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor2::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2(r, c, std::move(data));
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

void set_num_threads(unsigned n) { g_threads.store(std::max(1u, n)); }
unsigned num_threads() { return g_threads.load(); }

void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(g_threads.load(), std::max<std::size_t>(1, n / kParallelGrain));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

void gemm_nn_acc(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  parallel_ranges(a.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* arow = a.row(i).data();
      double* orow = out.row(i).data();
      for (std::size_t k = 0; k < n; ++k) {
        const double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = b.row(k).data();
        for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

void gemm_nt_acc(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  const std::size_t n = a.cols();
  parallel_ranges(a.rows(), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* arow = a.row(i).data();
      double* orow = out.row(i).data();
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const double* brow = b.row(j).data();
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += arow[k] * brow[k];
        orow[j] += acc;
      }
    }
  });
}

void gemm_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  // out (a.cols × b.cols) += Σ_r a[r]ᵀ b[r]; partitioned over output rows so
  // each thread owns a disjoint slice of `out`.
  const std::size_t m = b.cols();
  parallel_ranges(a.cols(), [&](std::size_t c0, std::size_t c1) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double* arow = a.row(r).data();
      const double* brow = b.row(r).data();
      for (std::size_t i = c0; i < c1; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* orow = out.row(i).data();
        for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
  }
  Tensor2 out(a.rows(), b.cols());
  gemm_nn_acc(a, b, out);
  return out;
}

Tensor2 xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

double frobenius_distance(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("frobenius_distance: " + a.shape_string() + " vs " + b.shape_string());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace dmicf
