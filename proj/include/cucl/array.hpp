#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cucl {

// Thrown when a computation produces NaN/Inf or receives non-finite input.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major float64 array, 1-D or 2-D.
// Invariant: product(shape) == data size; values are finite unless a caller
// mutated raw storage, in which case require_finite() is the checkpoint.
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<std::size_t> shape);  // zero-filled
  Array(std::vector<std::size_t> shape, std::vector<double> values);

  static Array scalar(double v);
  static Array zeros_like(const Array& other);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // Row/column view: a 1-D array of n elements reads as a single row (1 x n).
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    return shape_.size() == 2 ? shape_[1] : (shape_.empty() ? 0 : shape_[0]);
  }

  bool is_scalar() const { return data_.size() == 1; }
  bool same_shape(const Array& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  // Value of a single-element array; throws otherwise.
  double scalar_value() const;

  bool all_finite() const;
  void require_finite(const std::string& context) const;

  bool operator==(const Array& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const Array& a);

// out = op(a) * op(b) with optional transposes, both operands read as 2-D.
Array matmul_plain(const Array& a, const Array& b, bool trans_a = false,
                   bool trans_b = false);

// Accumulate op(a)*op(b) into out (shapes must already agree).
void gemm_accumulate(const Array& a, bool trans_a, const Array& b, bool trans_b,
                     Array& out);

// dot(a,b) / (max(|a|,eps) * max(|b|,eps)) with eps = 1e-12.
// Equal-length 1-D inputs; zero vectors yield similarity 0.
double cosine_similarity(const Array& a, const Array& b);

inline constexpr double kNormEpsilon = 1e-12;

}  // namespace cucl
