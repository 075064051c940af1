#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmicf/tensor.hpp"

namespace dmicf::ad {

/// Misuse of the tape: backward twice, backward on a non-scalar, mixing tapes.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor2& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Define-by-run gradient tape.
///
/// Every op evaluates eagerly and, when the tape is recording, stores a
/// closure that maps the node's output gradient onto its inputs. Parameters
/// are bound by reference (no copy); the bound tensor must outlive the tape
/// and must not be modified until backward() has run.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor2& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor2 value);
  /// Constant bound by reference; `value` must outlive the tape.
  Var constant_ref(const Tensor2& value);
  /// Leaf that receives a gradient after backward().
  Var parameter(const Tensor2& value);

  /// Registers an op result. `inputs` decide whether the node needs a
  /// gradient; `fn` is dropped when none of them do or the tape is not
  /// recording.
  Var push(Tensor2 value, std::initializer_list<Var> inputs, Backward fn);
  Var push(Tensor2 value, std::span<const Var> inputs, Backward fn);

  const Tensor2& value(Var v) const;
  bool needs_grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }

  /// Gradient of the last backward() loss with respect to v. A node that
  /// received no gradient reports zeros of its own shape.
  Tensor2 grad(Var v) const;

  /// Accumulation buffer for an input, allocated on first touch. Only valid
  /// inside a Backward closure.
  Tensor2& grad_buffer(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor2 owned;
    const Tensor2* external = nullptr;
    Tensor2 grad;
    Backward backward;
    bool needs_grad = false;
    const Tensor2& value() const { return external ? *external : owned; }
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  bool record_;
  bool backward_done_ = false;
};

// ---- ops -----------------------------------------------------------------
// Shapes are checked eagerly; mismatches raise DimensionError.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// x (n×c) + bias (1×c) broadcast over rows.
Var add_bias(Var x, Var bias);
Var sigmoid(Var x);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var x, std::span<const std::size_t> index);
Var reshape(Var x, std::size_t rows, std::size_t cols);

/// Per-row dot product of two n×c matrices: n×1.
Var row_dot(Var a, Var b);
/// column (n×1) times every entry of the matching row of x (n×c).
Var row_scale(Var column, Var x);
/// Divides each row by its sum. Rows must have a strictly positive sum.
Var l1_normalize_rows(Var x);
/// Row-wise cosine of paired rows: n×1. Rows with norm < 1e-12 score 0.
Var cosine_rows(Var a, Var b);
/// Cosine of every row of x against every row of c: (n×d, K×d) → n×K.
Var cosine_matrix(Var x, Var c);
/// Row-wise softmax of x / temperature with max subtraction.
Var softmax_rows(Var x, double temperature);
/// Σ (x − target)².
Var squared_error_sum(Var x, const Tensor2& target);
Var sum(Var x);
Var mean(Var x);

/// Norm below which a vector is treated as zero by the cosine ops.
inline constexpr double kZeroNorm = 1e-12;

}  // namespace dmicf::ad
