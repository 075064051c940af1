#include "dmicf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmicf::ad {

// ---- Var / Tape -------------------------------------------------------------

const Tensor2& Var::value() const {
  if (tape == nullptr) throw TapeError("Var: not bound to a tape");
  return tape->value(*this);
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw TapeError("Tape: variable does not belong to this tape");
  }
}

Var Tape::constant(Tensor2 value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor2& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor2& value) {
  Node n;
  n.external = &value;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor2 value, std::initializer_list<Var> inputs, Backward fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Tape::push(Tensor2 value, std::span<const Var> inputs, Backward fn) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (const Var& in : inputs) {
      check(in);
      if (nodes_[in.id].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Tensor2& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value();
}

bool Tape::needs_grad(Var v) const {
  check(v);
  return nodes_[v.id].needs_grad;
}

Tensor2& Tape::grad_buffer(Var v) {
  check(v);
  Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value().empty()) {
    n.grad = Tensor2(n.value().rows(), n.value().cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw TapeError("backward: tape was created without recording");
  check(loss);
  if (backward_done_) throw TapeError("backward: already called on this tape");
  const Tensor2& lv = nodes_[loss.id].value();
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw TapeError("backward: loss must be 1x1, got " + lv.shape_string());
  }
  if (!nodes_[loss.id].needs_grad) {
    throw TapeError("backward: loss does not depend on any parameter");
  }
  backward_done_ = true;
  grad_buffer(loss)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

Tensor2 Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor2(n.value().rows(), n.value().cols());
  return n.grad;
}

// ---- ops ------------------------------------------------------------------

namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw TapeError("op on unbound variable");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw TapeError("op mixes variables from different tapes");
  return tape_of(a);
}

void require_same_shape(const char* op, const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: cannot multiply " + av.shape_string() + " by " +
                         bv.shape_string());
  }
  Tensor2 out(av.rows(), bv.cols());
  gemm_nn_acc(av, bv, out);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    if (tp.needs_grad(a)) gemm_nt_acc(g, b.value(), tp.grad_buffer(a));
    if (tp.needs_grad(b)) gemm_tn_acc(a.value(), g, tp.grad_buffer(b));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  require_same_shape("add", av, bv);
  Tensor2 out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += bv.data()[i];
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    for (Var v : {a, b}) {
      if (!tp.needs_grad(v)) continue;
      auto& gb = tp.grad_buffer(v).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.data()[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  const Tensor2& xv = x.value();
  const Tensor2& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_bias: bias " + bv.shape_string() + " does not fit input " +
                         xv.shape_string());
  }
  Tensor2 out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  return t.push(std::move(out), {x, bias}, [x, bias](Tape& tp, const Tensor2& g) {
    if (tp.needs_grad(x)) {
      auto& gx = tp.grad_buffer(x).data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g.data()[i];
    }
    if (tp.needs_grad(bias)) {
      Tensor2& gb = tp.grad_buffer(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb(0, c) += row[c];
      }
    }
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Tensor2 out = x.value();
  for (double& v : out.data()) v = stable_sigmoid(v);
  const std::size_t self = t.size();
  return t.push(std::move(out), {x}, [x, self](Tape& tp, const Tensor2& g) {
    const Tensor2& y = tp.value(Var{&tp, self});
    auto& gx = tp.grad_buffer(x).data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double yi = y.data()[i];
      gx[i] += g.data()[i] * yi * (1.0 - yi);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor2 out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= bv.data()[i];
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    if (tp.needs_grad(a)) {
      const auto& other = b.value().data();
      auto& ga = tp.grad_buffer(a).data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data()[i] * other[i];
    }
    if (tp.needs_grad(b)) {
      const auto& other = a.value().data();
      auto& gb = tp.grad_buffer(b).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.data()[i] * other[i];
    }
  });
}

Var scale(Var x, double s) {
  Tape& t = tape_of(x);
  Tensor2 out = x.value();
  for (double& v : out.data()) v *= s;
  return t.push(std::move(out), {x}, [x, s](Tape& tp, const Tensor2& g) {
    auto& gx = tp.grad_buffer(x).data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * g.data()[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row count " + std::to_string(p.rows()) +
                           " differs from " + std::to_string(rows));
    }
    cols += p.cols();
  }
  Tensor2 out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor2& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + offset);
    }
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(out), parts, [inputs](Tape& tp, const Tensor2& g) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t w = p.cols();
      if (tp.needs_grad(p)) {
        Tensor2& gp = tp.grad_buffer(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row(r).subspan(off, w);
          auto dst = gp.row(r);
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
      }
      off += w;
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  Tape& t = tape_of(x);
  const Tensor2& xv = x.value();
  Tensor2 out(index.size(), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(index[i]) +
                           " out of range for " + xv.shape_string());
    }
    std::copy(xv.row(index[i]).begin(), xv.row(index[i]).end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return t.push(std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Tensor2& g) {
    Tensor2& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = g.row(i);
      auto dst = gx.row(idx[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(x);
  const Tensor2& xv = x.value();
  if (rows * cols != xv.size()) {
    throw DimensionError("reshape: cannot view " + xv.shape_string() + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Tensor2 out(rows, cols, xv.data());
  return t.push(std::move(out), {x}, [x](Tape& tp, const Tensor2& g) {
    auto& gx = tp.grad_buffer(x).data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g.data()[i];
  });
}

Var row_dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  require_same_shape("row_dot", av, bv);
  Tensor2 out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) acc += av(r, c) * bv(r, c);
    out(r, 0) = acc;
  }
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor2& g) {
    for (auto [self, other] : {std::pair{a, b}, std::pair{b, a}}) {
      if (!tp.needs_grad(self)) continue;
      const Tensor2& ov = other.value();
      Tensor2& gs = tp.grad_buffer(self);
      for (std::size_t r = 0; r < ov.rows(); ++r) {
        for (std::size_t c = 0; c < ov.cols(); ++c) gs(r, c) += g(r, 0) * ov(r, c);
      }
    }
  });
}

Var row_scale(Var column, Var x) {
  Tape& t = tape_of(column, x);
  const Tensor2& cv = column.value();
  const Tensor2& xv = x.value();
  if (cv.cols() != 1 || cv.rows() != xv.rows()) {
    throw DimensionError("row_scale: column " + cv.shape_string() + " does not fit " +
                         xv.shape_string());
  }
  Tensor2 out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) v *= cv(r, 0);
  }
  return t.push(std::move(out), {column, x}, [column, x](Tape& tp, const Tensor2& g) {
    const Tensor2& cval = column.value();
    const Tensor2& xval = x.value();
    if (tp.needs_grad(column)) {
      Tensor2& gc = tp.grad_buffer(column);
      for (std::size_t r = 0; r < xval.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < xval.cols(); ++c) acc += g(r, c) * xval(r, c);
        gc(r, 0) += acc;
      }
    }
    if (tp.needs_grad(x)) {
      Tensor2& gx = tp.grad_buffer(x);
      for (std::size_t r = 0; r < xval.rows(); ++r) {
        for (std::size_t c = 0; c < xval.cols(); ++c) gx(r, c) += g(r, c) * cval(r, 0);
      }
    }
  });
}

Var l1_normalize_rows(Var x) {
  Tape& t = tape_of(x);
  const Tensor2& xv = x.value();
  Tensor2 out = xv;
  std::vector<double> sums(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v;
    if (!(s > 0.0)) {
      throw std::domain_error("l1_normalize_rows: row " + std::to_string(r) +
                              " has non-positive sum");
    }
    sums[r] = s;
    for (double& v : out.row(r)) v /= s;
  }
  const std::size_t self = t.size();
  return t.push(std::move(out), {x},
                [x, self, sums = std::move(sums)](Tape& tp, const Tensor2& g) {
                  const Tensor2& y = tp.value(Var{&tp, self});
                  Tensor2& gx = tp.grad_buffer(x);
                  for (std::size_t r = 0; r < y.rows(); ++r) {
                    double gy = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) gy += g(r, c) * y(r, c);
                    for (std::size_t c = 0; c < y.cols(); ++c) {
                      gx(r, c) += (g(r, c) - gy) / sums[r];
                    }
                  }
                });
}

Var cosine_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  require_same_shape("cosine_rows", av, bv);
  const std::size_t n = av.rows();
  Tensor2 out(n, 1);
  std::vector<double> na(n), nb(n);
  for (std::size_t r = 0; r < n; ++r) {
    na[r] = row_norm(av.row(r));
    nb[r] = row_norm(bv.row(r));
    if (na[r] < kZeroNorm || nb[r] < kZeroNorm) continue;
    double dot = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) dot += av(r, c) * bv(r, c);
    out(r, 0) = dot / (na[r] * nb[r]);
  }
  const std::size_t self = t.size();
  return t.push(std::move(out), {a, b},
                [a, b, self, na = std::move(na), nb = std::move(nb)](Tape& tp,
                                                                     const Tensor2& g) {
                  const Tensor2& cosv = tp.value(Var{&tp, self});
                  const Tensor2& aval = a.value();
                  const Tensor2& bval = b.value();
                  const bool ga_on = tp.needs_grad(a);
                  const bool gb_on = tp.needs_grad(b);
                  Tensor2* ga = ga_on ? &tp.grad_buffer(a) : nullptr;
                  Tensor2* gb = gb_on ? &tp.grad_buffer(b) : nullptr;
                  for (std::size_t r = 0; r < aval.rows(); ++r) {
                    if (na[r] < kZeroNorm || nb[r] < kZeroNorm) continue;
                    const double gr = g(r, 0);
                    const double cs = cosv(r, 0);
                    const double inv = 1.0 / (na[r] * nb[r]);
                    for (std::size_t c = 0; c < aval.cols(); ++c) {
                      if (ga) (*ga)(r, c) += gr * (bval(r, c) * inv - cs * aval(r, c) / (na[r] * na[r]));
                      if (gb) (*gb)(r, c) += gr * (aval(r, c) * inv - cs * bval(r, c) / (nb[r] * nb[r]));
                    }
                  }
                });
}

Var cosine_matrix(Var x, Var c) {
  Tape& t = tape_of(x, c);
  const Tensor2& xv = x.value();
  const Tensor2& cv = c.value();
  if (xv.cols() != cv.cols()) {
    throw DimensionError("cosine_matrix: vectors " + xv.shape_string() +
                         " and prototypes " + cv.shape_string() + " differ in width");
  }
  const std::size_t n = xv.rows();
  const std::size_t k = cv.rows();
  std::vector<double> nx(n), nc(k);
  for (std::size_t r = 0; r < n; ++r) nx[r] = row_norm(xv.row(r));
  for (std::size_t r = 0; r < k; ++r) nc[r] = row_norm(cv.row(r));
  Tensor2 out(n, k);
  gemm_nt_acc(xv, cv, out);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      out(i, j) = (nx[i] < kZeroNorm || nc[j] < kZeroNorm) ? 0.0 : out(i, j) / (nx[i] * nc[j]);
    }
  }
  const std::size_t self = t.size();
  return t.push(
      std::move(out), {x, c},
      [x, c, self, nx = std::move(nx), nc = std::move(nc)](Tape& tp, const Tensor2& g) {
        const Tensor2& cosv = tp.value(Var{&tp, self});
        const std::size_t n = cosv.rows();
        const std::size_t k = cosv.cols();
        // w = g / (|x||c|) on live entries; diagonal terms carry the
        // derivative of the norms.
        Tensor2 w(n, k);
        std::vector<double> dx_diag(n, 0.0), dc_diag(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            if (nx[i] < kZeroNorm || nc[j] < kZeroNorm) continue;
            w(i, j) = g(i, j) / (nx[i] * nc[j]);
            dx_diag[i] += g(i, j) * cosv(i, j) / (nx[i] * nx[i]);
            dc_diag[j] += g(i, j) * cosv(i, j) / (nc[j] * nc[j]);
          }
        }
        if (tp.needs_grad(x)) {
          Tensor2& gx = tp.grad_buffer(x);
          gemm_nn_acc(w, c.value(), gx);
          const Tensor2& xval = x.value();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < xval.cols(); ++d) gx(i, d) -= dx_diag[i] * xval(i, d);
          }
        }
        if (tp.needs_grad(c)) {
          Tensor2& gc = tp.grad_buffer(c);
          gemm_tn_acc(w, x.value(), gc);
          const Tensor2& cval = c.value();
          for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t d = 0; d < cval.cols(); ++d) gc(j, d) -= dc_diag[j] * cval(j, d);
          }
        }
      });
}

Var softmax_rows(Var x, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax_rows: temperature must be > 0");
  Tape& t = tape_of(x);
  Tensor2 out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double& v : row) {
      v = std::exp((v - mx) / temperature);
      denom += v;
    }
    for (double& v : row) v /= denom;
  }
  const std::size_t self = t.size();
  return t.push(std::move(out), {x}, [x, self, temperature](Tape& tp, const Tensor2& g) {
    const Tensor2& y = tp.value(Var{&tp, self});
    Tensor2& gx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double gy = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) gy += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) {
        gx(r, c) += y(r, c) * (g(r, c) - gy) / temperature;
      }
    }
  });
}

Var squared_error_sum(Var x, const Tensor2& target) {
  Tape& t = tape_of(x);
  const Tensor2& xv = x.value();
  require_same_shape("squared_error_sum", xv, target);
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv.data()[i] - target.data()[i];
    acc += d * d;
  }
  return t.push(Tensor2(1, 1, acc), {x}, [x, target](Tape& tp, const Tensor2& g) {
    const auto& xd = x.value().data();
    auto& gx = tp.grad_buffer(x).data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += 2.0 * g(0, 0) * (xd[i] - target.data()[i]);
    }
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return t.push(Tensor2(1, 1, acc), {x}, [x](Tape& tp, const Tensor2& g) {
    for (double& v : tp.grad_buffer(x).data()) v += g(0, 0);
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

}  // namespace dmicf::ad
