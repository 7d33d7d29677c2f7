#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cucl/array.hpp"

namespace cucl {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;
};

// Recording of a computation over Arrays with reverse-mode differentiation.
// Nodes are appended in execution order, so index order is a topological
// order and the backward sweep is a single reverse pass. Single-writer: one
// tape must not be shared across threads, distinct tapes may run in parallel.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf: its gradient is accumulated during backward.
  Var input(Array value);
  // Non-differentiable leaf (masks, frozen data).
  Var constant(Array value);

  const Array& value(Var v) const { return nodes_[check(v)].value; }
  double scalar_value(Var v) const { return value(v).scalar_value(); }

  // Gradient of the last backward() output w.r.t. v. Zero-filled for inputs
  // the output does not depend on. Throws before any backward() ran.
  const Array& grad(Var v) const;

  // Reverse sweep from a scalar output. Visits nodes in reverse creation
  // order exactly once; checks every accumulated adjoint for NaN/Inf.
  void backward(Var output);

  std::size_t node_count() const { return nodes_.size(); }
  void clear();

 private:
  friend struct TapeOps;

  struct Node {
    Array value;
    Array adjoint;
    bool requires_grad = false;
    // Scatter this node's adjoint into its inputs' adjoints.
    std::function<void(Tape&, const Array& up)> backprop;
  };

  std::uint32_t check(Var v) const;
  Var emit(Array value, bool requires_grad,
           std::function<void(Tape&, const Array&)> backprop);
  void accumulate(std::uint32_t node, const Array& delta);
  void accumulate_scaled(std::uint32_t node, const Array& delta, double s);

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// ---- primitive operations ----
Var add(Var a, Var b);                   // elementwise, same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                   // elementwise (Hadamard)
Var scale(Var a, double c);
Var add_rowwise(Var matrix, Var row);    // broadcast row over matrix rows
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var vexp(Var a);
Var vlog(Var a);
Var vtanh(Var a);
Var sum(Var a);                          // -> scalar
Var mean(Var a);                         // -> scalar
Var row_sum(Var a);                      // n x m -> {n}
Var logsumexp_rows(Var a);               // n x m -> {n}, max-shifted
Var softmax_rows(Var a);                 // n x m -> n x m, max-shifted
Var normalize_rows(Var a);               // rows scaled to unit L2, clamp 1e-12
Var pairwise_sqdist(Var x, Var c);       // n x d, k x d -> n x k
Var slice_cols(Var a, std::size_t col_begin, std::size_t col_end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var detach(Var a);                       // value copy, blocks gradient

// ---- composed helpers ----
Var neg(Var a);
Var cosine_rows(Var a, Var b);           // row-wise cosine -> {n}
Var cosine_matrix(Var a, Var b);         // all-pairs cosine -> n x n

// Forward evaluation plus full gradient of a scalar program.
struct GradientResult {
  double value = 0.0;
  std::vector<Array> gradients;  // one per input, matching shapes
};

using Program = std::function<Var(Tape&, const std::vector<Var>&)>;

// Runs `program` on fresh tape inputs, checks the output is a finite scalar,
// and returns the value with gradients for every input. Deterministic:
// identical inputs give bit-identical values and gradients.
GradientResult forward_backward(const Program& program,
                                const std::vector<Array>& inputs);

}  // namespace cucl
