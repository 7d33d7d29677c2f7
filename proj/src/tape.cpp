#include "cucl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cucl {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

void require_live(Var a, const char* op) {
  if (a.tape == nullptr)
    throw std::invalid_argument(std::string(op) + ": null var");
}

}  // namespace

// Private-access shim for the free operation functions.
struct TapeOps {
  static Var emit(Tape& t, Array value, bool requires_grad,
                  std::function<void(Tape&, const Array&)> backprop,
                  const char* op) {
    value.require_finite(op);
    return t.emit(std::move(value), requires_grad, std::move(backprop));
  }
  static const Array& val(const Tape& t, std::uint32_t i) { return t.nodes_[i].value; }
  static bool needs_grad(const Tape& t, std::uint32_t i) {
    return t.nodes_[i].requires_grad;
  }
  static void acc(Tape& t, std::uint32_t i, const Array& d) { t.accumulate(i, d); }
  static void acc_scaled(Tape& t, std::uint32_t i, const Array& d, double s) {
    t.accumulate_scaled(i, d, s);
  }
  static Array& adjoint(Tape& t, std::uint32_t i) { return t.nodes_[i].adjoint; }
};

using Ops = TapeOps;

std::uint32_t Tape::check(Var v) const {
  if (v.tape != this) throw std::invalid_argument("Var does not belong to this tape");
  if (v.index >= nodes_.size()) throw std::invalid_argument("Var index out of range");
  return v.index;
}

Var Tape::emit(Array value, bool requires_grad,
               std::function<void(Tape&, const Array&)> backprop) {
  Node node;
  node.adjoint = Array::zeros_like(value);
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Array value) {
  value.require_finite("Tape::input");
  return emit(std::move(value), true, nullptr);
}

Var Tape::constant(Array value) {
  value.require_finite("Tape::constant");
  return emit(std::move(value), false, nullptr);
}

const Array& Tape::grad(Var v) const {
  if (!ran_backward_) throw std::logic_error("Tape::grad: backward() has not run");
  return nodes_[check(v)].adjoint;
}

void Tape::accumulate(std::uint32_t node, const Array& delta) {
  Node& n = nodes_[node];
  if (!n.requires_grad) return;
  double* a = n.adjoint.data();
  const double* d = delta.data();
  for (std::size_t i = 0; i < n.adjoint.size(); ++i) a[i] += d[i];
}

void Tape::accumulate_scaled(std::uint32_t node, const Array& delta, double s) {
  Node& n = nodes_[node];
  if (!n.requires_grad) return;
  double* a = n.adjoint.data();
  const double* d = delta.data();
  for (std::size_t i = 0; i < n.adjoint.size(); ++i) a[i] += s * d[i];
}

void Tape::backward(Var output) {
  const std::uint32_t out = check(output);
  if (!nodes_[out].value.is_scalar())
    throw std::invalid_argument("Tape::backward: output is not a scalar, shape " +
                                shape_string(nodes_[out].value));
  nodes_[out].value.require_finite("Tape::backward output");
  for (Node& n : nodes_) std::fill_n(n.adjoint.data(), n.adjoint.size(), 0.0);
  nodes_[out].adjoint[0] = 1.0;
  for (std::uint32_t i = out + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(*this, n.adjoint);
  }
  // Leaf inputs are the user-visible gradients; reject NaN/Inf there.
  for (const Node& n : nodes_)
    if (n.requires_grad && !n.backprop) n.adjoint.require_finite("Tape::backward gradient");
  ran_backward_ = true;
}

void Tape::clear() {
  nodes_.clear();
  ran_backward_ = false;
}

// ---------------------------------------------------------------------------
// primitives

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const Array& vb = t.value(b);
  if (!va.same_shape(vb))
    throw std::invalid_argument("add: shape mismatch " + shape_string(va) + " vs " +
                                shape_string(vb));
  Array out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const std::uint32_t ai = a.index, bi = b.index;
  bool rg = Ops::needs_grad(t, ai) || Ops::needs_grad(t, bi);
  return Ops::emit(t, std::move(out), rg,
                   [ai, bi](Tape& tp, const Array& up) {
                     Ops::acc(tp, ai, up);
                     Ops::acc(tp, bi, up);
                   },
                   "add");
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const Array& vb = t.value(b);
  if (!va.same_shape(vb))
    throw std::invalid_argument("sub: shape mismatch " + shape_string(va) + " vs " +
                                shape_string(vb));
  Array out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  const std::uint32_t ai = a.index, bi = b.index;
  bool rg = Ops::needs_grad(t, ai) || Ops::needs_grad(t, bi);
  return Ops::emit(t, std::move(out), rg,
                   [ai, bi](Tape& tp, const Array& up) {
                     Ops::acc(tp, ai, up);
                     Ops::acc_scaled(tp, bi, up, -1.0);
                   },
                   "sub");
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const Array& vb = t.value(b);
  if (!va.same_shape(vb))
    throw std::invalid_argument("mul: shape mismatch " + shape_string(va) + " vs " +
                                shape_string(vb));
  Array out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const std::uint32_t ai = a.index, bi = b.index;
  bool rg = Ops::needs_grad(t, ai) || Ops::needs_grad(t, bi);
  return Ops::emit(t, std::move(out), rg,
                   [ai, bi](Tape& tp, const Array& up) {
                     const Array& xa = Ops::val(tp, ai);
                     const Array& xb = Ops::val(tp, bi);
                     Array d = up;
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] *= xb[i];
                     Ops::acc(tp, ai, d);
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] = up[i] * xa[i];
                     Ops::acc(tp, bi, d);
                   },
                   "mul");
}

Var scale(Var a, double c) {
  require_live(a, "scale");
  Tape& t = *a.tape;
  if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
  Array out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  const std::uint32_t ai = a.index;
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, c](Tape& tp, const Array& up) { Ops::acc_scaled(tp, ai, up, c); },
                   "scale");
}

Var add_rowwise(Var matrix, Var row) {
  require_same_tape(matrix, row, "add_rowwise");
  Tape& t = *matrix.tape;
  const Array& vm = t.value(matrix);
  const Array& vr = t.value(row);
  if (vr.rows() != 1 || vr.cols() != vm.cols())
    throw std::invalid_argument("add_rowwise: row shape " + shape_string(vr) +
                                " incompatible with matrix " + shape_string(vm));
  Array out = vm;
  const std::size_t n = vm.rows(), m = vm.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) += vr[c];
  const std::uint32_t mi = matrix.index, ri = row.index;
  bool rg = Ops::needs_grad(t, mi) || Ops::needs_grad(t, ri);
  return Ops::emit(t, std::move(out), rg,
                   [mi, ri, n, m](Tape& tp, const Array& up) {
                     Ops::acc(tp, mi, up);
                     Array d(Ops::val(tp, ri).shape());
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < m; ++c) d[c] += up.at(r, c);
                     Ops::acc(tp, ri, d);
                   },
                   "add_rowwise");
}

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  Array out = matmul_plain(t.value(a), t.value(b), trans_a, trans_b);
  const std::uint32_t ai = a.index, bi = b.index;
  bool rg = Ops::needs_grad(t, ai) || Ops::needs_grad(t, bi);
  return Ops::emit(
      t, std::move(out), rg,
      [ai, bi, trans_a, trans_b](Tape& tp, const Array& up) {
        const Array& va = Ops::val(tp, ai);
        const Array& vb = Ops::val(tp, bi);
        if (Ops::needs_grad(tp, ai)) {
          Array& da = Ops::adjoint(tp, ai);
          if (!trans_a)
            gemm_accumulate(up, false, vb, !trans_b, da);
          else if (!trans_b)
            gemm_accumulate(vb, false, up, true, da);   // dA = B U^T
          else
            gemm_accumulate(vb, true, up, true, da);    // dA = B^T U^T
        }
        if (Ops::needs_grad(tp, bi)) {
          Array& db = Ops::adjoint(tp, bi);
          if (!trans_a && !trans_b)
            gemm_accumulate(va, true, up, false, db);   // dB = A^T U
          else if (!trans_a && trans_b)
            gemm_accumulate(up, true, va, false, db);   // dB = U^T A
          else if (trans_a && !trans_b)
            gemm_accumulate(va, false, up, false, db);  // dB = A U
          else
            gemm_accumulate(up, true, va, true, db);    // dB = U^T A^T
        }
      },
      "matmul");
}

Var vexp(Var a) {
  require_live(a, "exp");
  Tape& t = *a.tape;
  Array out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  const std::uint32_t ai = a.index;
  const std::uint32_t self = static_cast<std::uint32_t>(t.node_count());
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, self](Tape& tp, const Array& up) {
                     const Array& y = Ops::val(tp, self);  // d exp(x) = exp(x)
                     Array d = up;
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i];
                     Ops::acc(tp, ai, d);
                   },
                   "exp");
}

Var vlog(Var a) {
  require_live(a, "log");
  Tape& t = *a.tape;
  Array out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  const std::uint32_t ai = a.index;
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai](Tape& tp, const Array& up) {
                     const Array& x = Ops::val(tp, ai);
                     Array d = up;
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
                     Ops::acc(tp, ai, d);
                   },
                   "log");
}

Var vtanh(Var a) {
  require_live(a, "tanh");
  Tape& t = *a.tape;
  Array out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  const std::uint32_t ai = a.index;
  const std::uint32_t self = static_cast<std::uint32_t>(t.node_count());
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, self](Tape& tp, const Array& up) {
                     const Array& y = Ops::val(tp, self);
                     Array d = up;
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
                     Ops::acc(tp, ai, d);
                   },
                   "tanh");
}

Var sum(Var a) {
  require_live(a, "sum");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
  const std::uint32_t ai = a.index;
  return Ops::emit(t, Array::scalar(s), Ops::needs_grad(t, ai),
                   [ai](Tape& tp, const Array& up) {
                     Array d(Ops::val(tp, ai).shape());
                     std::fill_n(d.data(), d.size(), up[0]);
                     Ops::acc(tp, ai, d);
                   },
                   "sum");
}

Var mean(Var a) {
  require_live(a, "mean");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const double inv = 1.0 / static_cast<double>(va.size());
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
  const std::uint32_t ai = a.index;
  return Ops::emit(t, Array::scalar(s * inv), Ops::needs_grad(t, ai),
                   [ai, inv](Tape& tp, const Array& up) {
                     Array d(Ops::val(tp, ai).shape());
                     std::fill_n(d.data(), d.size(), up[0] * inv);
                     Ops::acc(tp, ai, d);
                   },
                   "mean");
}

Var row_sum(Var a) {
  require_live(a, "row_sum");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const std::size_t n = va.rows(), m = va.cols();
  Array out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += va.at(r, c);
    out[r] = s;
  }
  const std::uint32_t ai = a.index;
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, n, m](Tape& tp, const Array& up) {
                     Array d(Ops::val(tp, ai).shape());
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < m; ++c) d.at(r, c) = up[r];
                     Ops::acc(tp, ai, d);
                   },
                   "row_sum");
}

Var logsumexp_rows(Var a) {
  require_live(a, "logsumexp_rows");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const std::size_t n = va.rows(), m = va.cols();
  Array out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) hi = std::max(hi, va.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += std::exp(va.at(r, c) - hi);
    out[r] = hi + std::log(s);
  }
  const std::uint32_t ai = a.index;
  const std::uint32_t self = static_cast<std::uint32_t>(t.node_count());
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, self, n, m](Tape& tp, const Array& up) {
                     // d lse / d x = softmax(x) = exp(x - lse)
                     const Array& x = Ops::val(tp, ai);
                     const Array& lse = Ops::val(tp, self);
                     Array d(x.shape());
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < m; ++c)
                         d.at(r, c) = up[r] * std::exp(x.at(r, c) - lse[r]);
                     Ops::acc(tp, ai, d);
                   },
                   "logsumexp_rows");
}

Var softmax_rows(Var a) {
  require_live(a, "softmax_rows");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const std::size_t n = va.rows(), m = va.cols();
  Array out = va;
  for (std::size_t r = 0; r < n; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) hi = std::max(hi, out.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double e = std::exp(out.at(r, c) - hi);
      out.at(r, c) = e;
      s += e;
    }
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) /= s;
  }
  const std::uint32_t ai = a.index;
  const std::uint32_t self = static_cast<std::uint32_t>(t.node_count());
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, self, n, m](Tape& tp, const Array& up) {
                     const Array& y = Ops::val(tp, self);
                     Array d(y.shape());
                     for (std::size_t r = 0; r < n; ++r) {
                       double inner = 0.0;
                       for (std::size_t c = 0; c < m; ++c) inner += up.at(r, c) * y.at(r, c);
                       for (std::size_t c = 0; c < m; ++c)
                         d.at(r, c) = y.at(r, c) * (up.at(r, c) - inner);
                     }
                     Ops::acc(tp, ai, d);
                   },
                   "softmax_rows");
}

Var normalize_rows(Var a) {
  require_live(a, "normalize_rows");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  const std::size_t n = va.rows(), m = va.cols();
  Array out = va;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += out.at(r, c) * out.at(r, c);
    const double d = std::max(std::sqrt(s), kNormEpsilon);
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) /= d;
  }
  const std::uint32_t ai = a.index;
  const std::uint32_t self = static_cast<std::uint32_t>(t.node_count());
  return Ops::emit(
      t, std::move(out), Ops::needs_grad(t, ai),
      [ai, self, n, m](Tape& tp, const Array& up) {
        const Array& x = Ops::val(tp, ai);
        const Array& y = Ops::val(tp, self);
        Array d(x.shape());
        for (std::size_t r = 0; r < n; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < m; ++c) s += x.at(r, c) * x.at(r, c);
          const double norm = std::sqrt(s);
          const double denom = std::max(norm, kNormEpsilon);
          if (norm > kNormEpsilon) {
            double inner = 0.0;
            for (std::size_t c = 0; c < m; ++c) inner += up.at(r, c) * y.at(r, c);
            for (std::size_t c = 0; c < m; ++c)
              d.at(r, c) = (up.at(r, c) - y.at(r, c) * inner) / denom;
          } else {
            // clamped branch: out = x / eps is linear in x
            for (std::size_t c = 0; c < m; ++c) d.at(r, c) = up.at(r, c) / denom;
          }
        }
        Ops::acc(tp, ai, d);
      },
      "normalize_rows");
}

Var pairwise_sqdist(Var x, Var c) {
  require_same_tape(x, c, "pairwise_sqdist");
  Tape& t = *x.tape;
  const Array& vx = t.value(x);
  const Array& vc = t.value(c);
  if (vx.cols() != vc.cols())
    throw std::invalid_argument("pairwise_sqdist: dimension mismatch " +
                                shape_string(vx) + " vs " + shape_string(vc));
  const std::size_t n = vx.rows(), k = vc.rows(), dim = vx.cols();
  Array out({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t dd = 0; dd < dim; ++dd) {
        const double diff = vx.at(i, dd) - vc.at(j, dd);
        s += diff * diff;
      }
      out.at(i, j) = s;
    }
  const std::uint32_t xi = x.index, ci = c.index;
  bool rg = Ops::needs_grad(t, xi) || Ops::needs_grad(t, ci);
  return Ops::emit(
      t, std::move(out), rg,
      [xi, ci, n, k, dim](Tape& tp, const Array& up) {
        const Array& a = Ops::val(tp, xi);
        const Array& b = Ops::val(tp, ci);
        if (Ops::needs_grad(tp, xi)) {
          Array dx(a.shape());
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              const double w = 2.0 * up.at(i, j);
              for (std::size_t dd = 0; dd < dim; ++dd)
                dx.at(i, dd) += w * (a.at(i, dd) - b.at(j, dd));
            }
          Ops::acc(tp, xi, dx);
        }
        if (Ops::needs_grad(tp, ci)) {
          Array dc(b.shape());
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              const double w = 2.0 * up.at(i, j);
              for (std::size_t dd = 0; dd < dim; ++dd)
                dc.at(j, dd) += w * (b.at(j, dd) - a.at(i, dd));
            }
          Ops::acc(tp, ci, dc);
        }
      },
      "pairwise_sqdist");
}

Var slice_cols(Var a, std::size_t col_begin, std::size_t col_end) {
  require_live(a, "slice_cols");
  Tape& t = *a.tape;
  const Array& va = t.value(a);
  if (col_begin >= col_end || col_end > va.cols())
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(col_begin) +
                                ", " + std::to_string(col_end) + ") for " +
                                shape_string(va));
  const std::size_t n = va.rows(), w = col_end - col_begin;
  Array out({n, w});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = va.at(r, col_begin + c);
  const std::uint32_t ai = a.index;
  return Ops::emit(t, std::move(out), Ops::needs_grad(t, ai),
                   [ai, col_begin, n, w](Tape& tp, const Array& up) {
                     Array d(Ops::val(tp, ai).shape());
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t c = 0; c < w; ++c)
                         d.at(r, col_begin + c) = up.at(r, c);
                     Ops::acc(tp, ai, d);
                   },
                   "slice_cols");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = *parts[0].tape;
  const std::size_t n = t.value(parts[0]).rows();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    if (t.value(p).rows() != n)
      throw std::invalid_argument("concat_cols: row count mismatch");
    total += t.value(p).cols();
    rg = rg || Ops::needs_grad(t, p.index);
  }
  Array out({n, total});
  std::size_t off = 0;
  std::vector<std::uint32_t> idx;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    const Array& vp = t.value(p);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < vp.cols(); ++c) out.at(r, off + c) = vp.at(r, c);
    idx.push_back(p.index);
    widths.push_back(vp.cols());
    off += vp.cols();
  }
  return Ops::emit(t, std::move(out), rg,
                   [idx, widths, n](Tape& tp, const Array& up) {
                     std::size_t off = 0;
                     for (std::size_t p = 0; p < idx.size(); ++p) {
                       Array d(Ops::val(tp, idx[p]).shape());
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < widths[p]; ++c)
                           d.at(r, c) = up.at(r, off + c);
                       Ops::acc(tp, idx[p], d);
                       off += widths[p];
                     }
                   },
                   "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = *parts[0].tape;
  const std::size_t m = t.value(parts[0]).cols();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    if (t.value(p).cols() != m)
      throw std::invalid_argument("concat_rows: column count mismatch");
    total += t.value(p).rows();
    rg = rg || Ops::needs_grad(t, p.index);
  }
  Array out({total, m});
  std::size_t off = 0;
  std::vector<std::uint32_t> idx;
  std::vector<std::size_t> heights;
  for (Var p : parts) {
    const Array& vp = t.value(p);
    for (std::size_t r = 0; r < vp.rows(); ++r)
      for (std::size_t c = 0; c < m; ++c) out.at(off + r, c) = vp.at(r, c);
    idx.push_back(p.index);
    heights.push_back(vp.rows());
    off += vp.rows();
  }
  return Ops::emit(t, std::move(out), rg,
                   [idx, heights, m](Tape& tp, const Array& up) {
                     std::size_t off = 0;
                     for (std::size_t p = 0; p < idx.size(); ++p) {
                       Array d(Ops::val(tp, idx[p]).shape());
                       for (std::size_t r = 0; r < heights[p]; ++r)
                         for (std::size_t c = 0; c < m; ++c) d.at(r, c) = up.at(off + r, c);
                       Ops::acc(tp, idx[p], d);
                       off += heights[p];
                     }
                   },
                   "concat_rows");
}

Var detach(Var a) {
  require_live(a, "detach");
  Tape& t = *a.tape;
  return Ops::emit(t, t.value(a), false, nullptr, "detach");
}

// ---------------------------------------------------------------------------
// composed helpers

Var neg(Var a) { return scale(a, -1.0); }

Var cosine_rows(Var a, Var b) {
  return row_sum(mul(normalize_rows(a), normalize_rows(b)));
}

Var cosine_matrix(Var a, Var b) {
  return matmul(normalize_rows(a), normalize_rows(b), false, true);
}

GradientResult forward_backward(const Program& program,
                                const std::vector<Array>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Array& in : inputs) {
    in.require_finite("forward_backward input");
    vars.push_back(tape.input(in));
  }
  Var out = program(tape, vars);
  if (out.tape != &tape)
    throw std::invalid_argument("forward_backward: program escaped to another tape");
  const Array& value = tape.value(out);
  if (!value.is_scalar())
    throw std::invalid_argument("forward_backward: program output is not scalar, shape " +
                                shape_string(value));
  value.require_finite("forward_backward value");
  tape.backward(out);
  GradientResult result;
  result.value = value.scalar_value();
  result.gradients.reserve(vars.size());
  for (Var v : vars) {
    const Array& g = tape.grad(v);
    g.require_finite("forward_backward gradient");
    result.gradients.push_back(g);
  }
  return result;
}

}  // namespace cucl
