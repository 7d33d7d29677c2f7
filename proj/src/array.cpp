#include "cucl/array.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numeric>

namespace cucl {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("Array: zero extent in shape");
    n *= e;
  }
  return shape.empty() ? 0 : n;
}

using MatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMatMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Array::Array(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  if (shape_.empty() || shape_.size() > 2)
    throw std::invalid_argument("Array: rank must be 1 or 2");
}

Array::Array(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.empty() || shape_.size() > 2)
    throw std::invalid_argument("Array: rank must be 1 or 2");
  if (shape_product(shape_) != data_.size())
    throw std::invalid_argument("Array: shape does not match value count");
  require_finite("Array constructor");
}

Array Array::scalar(double v) { return Array({1}, {v}); }

Array Array::zeros_like(const Array& other) { return Array(other.shape_); }

double Array::scalar_value() const {
  if (data_.size() != 1)
    throw std::invalid_argument("scalar_value: array has " +
                                std::to_string(data_.size()) + " elements");
  return data_[0];
}

bool Array::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Array::require_finite(const std::string& context) const {
  if (!all_finite())
    throw NumericError(context + ": non-finite value in array of shape " +
                       shape_string(*this));
}

std::string shape_string(const Array& a) {
  std::string s = "(";
  const auto& shape = a.shape();
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Array matmul_plain(const Array& a, const Array& b, bool trans_a, bool trans_b) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_string(a) + " vs " + shape_string(b));
  Array out({m, n});
  gemm_accumulate(a, trans_a, b, trans_b, out);
  return out;
}

void gemm_accumulate(const Array& a, bool trans_a, const Array& b, bool trans_b,
                     Array& out) {
  MatMap ma(a.data(), static_cast<Eigen::Index>(a.rows()),
            static_cast<Eigen::Index>(a.cols()));
  MatMap mb(b.data(), static_cast<Eigen::Index>(b.rows()),
            static_cast<Eigen::Index>(b.cols()));
  MutMatMap mo(out.data(), static_cast<Eigen::Index>(out.rows()),
               static_cast<Eigen::Index>(out.cols()));
  if (!trans_a && !trans_b)
    mo.noalias() += ma * mb;
  else if (trans_a && !trans_b)
    mo.noalias() += ma.transpose() * mb;
  else if (!trans_a && trans_b)
    mo.noalias() += ma * mb.transpose();
  else
    mo.noalias() += ma.transpose() * mb.transpose();
}

double cosine_similarity(const Array& a, const Array& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: need equal-length vectors, got " +
                                shape_string(a) + " vs " + shape_string(b));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::max(std::sqrt(na), kNormEpsilon);
  nb = std::max(std::sqrt(nb), kNormEpsilon);
  return dot / (na * nb);
}

}  // namespace cucl
