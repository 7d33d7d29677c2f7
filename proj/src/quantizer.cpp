#include "cucl/quantizer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cucl {

void QuantizerConfig::validate() const {
  if (codebook_count < 1 || codeword_count < 1 || sub_dim < 1)
    throw std::invalid_argument("QuantizerConfig: counts must be >= 1");
  if (!(tau_q > 0.0))
    throw std::invalid_argument("QuantizerConfig: tau_q must be positive");
}

Codebook::Codebook(std::size_t codebook_count, std::size_t codeword_count,
                   std::size_t sub_dim) {
  books_.reserve(codebook_count);
  for (std::size_t i = 0; i < codebook_count; ++i)
    books_.emplace_back(std::vector<std::size_t>{codeword_count, sub_dim});
}

Codebook Codebook::init_from_batch(const QuantizerConfig& config, const Array& batch,
                                   Rng& rng) {
  config.validate();
  if (batch.cols() != config.dim())
    throw std::invalid_argument("Codebook::init_from_batch: batch dim " +
                                std::to_string(batch.cols()) + " != M*sub_dim " +
                                std::to_string(config.dim()));
  batch.require_finite("Codebook::init_from_batch");
  const std::size_t rows = batch.rows();
  const std::size_t m = config.codebook_count;
  const std::size_t k = config.codeword_count;
  const std::size_t sub = config.sub_dim;

  Codebook cb(m, k, sub);
  for (std::size_t i = 0; i < m; ++i) {
    // slot statistics: per-dimension mean, pooled standard deviation
    std::vector<double> mean(sub, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t d = 0; d < sub; ++d) mean[d] += batch.at(r, i * sub + d);
    for (double& v : mean) v /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t d = 0; d < sub; ++d) {
        const double diff = batch.at(r, i * sub + d) - mean[d];
        var += diff * diff;
      }
    var /= static_cast<double>(rows * sub);
    const double sigma = std::max(std::sqrt(var), 1e-3);

    Array& book = cb.books_[i];
    for (int attempt = 0;; ++attempt) {
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t d = 0; d < sub; ++d)
          book.at(kk, d) = mean[d] + sigma * rng.normal();
      bool distinct = true;
      for (std::size_t a = 0; a < k && distinct; ++a)
        for (std::size_t b = a + 1; b < k && distinct; ++b) {
          bool same = true;
          for (std::size_t d = 0; d < sub; ++d)
            if (book.at(a, d) != book.at(b, d)) {
              same = false;
              break;
            }
          if (same) distinct = false;
        }
      if (distinct) break;
      if (attempt > 100)
        throw std::runtime_error("Codebook::init_from_batch: cannot draw distinct codewords");
    }
  }
  return cb;
}

std::vector<Array> split(const Array& x, std::size_t parts) {
  if (x.ndim() != 1)
    throw std::invalid_argument("split: expected a vector, got " + shape_string(x));
  if (parts == 0 || x.size() % parts != 0)
    throw std::invalid_argument("split: dimension " + std::to_string(x.size()) +
                                " not divisible by " + std::to_string(parts));
  const std::size_t sub = x.size() / parts;
  std::vector<Array> out;
  out.reserve(parts);
  for (std::size_t i = 0; i < parts; ++i) {
    std::vector<double> vals(sub);
    for (std::size_t d = 0; d < sub; ++d) vals[d] = x[i * sub + d];
    out.emplace_back(std::vector<std::size_t>{sub}, std::move(vals));
  }
  return out;
}

double codeword_distance(const Array& x, const Array& c) {
  if (x.size() != c.size())
    throw std::invalid_argument("codeword_distance: dimension mismatch " +
                                shape_string(x) + " vs " + shape_string(c));
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double diff = x[d] - c[d];
    s += diff * diff;
  }
  return s;
}

Array soft_assign(const Array& x, const Array& codebook, double tau_q) {
  if (!(tau_q > 0.0)) throw std::invalid_argument("soft_assign: tau_q must be positive");
  if (x.size() != codebook.cols())
    throw std::invalid_argument("soft_assign: subvector dim " + std::to_string(x.size()) +
                                " vs codeword dim " + std::to_string(codebook.cols()));
  const std::size_t k = codebook.rows();
  std::vector<double> logits(k);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t kk = 0; kk < k; ++kk) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double diff = x[d] - codebook.at(kk, d);
      s += diff * diff;
    }
    logits[kk] = -s / tau_q;
    hi = std::max(hi, logits[kk]);
  }
  double total = 0.0;
  for (std::size_t kk = 0; kk < k; ++kk) {
    logits[kk] = std::exp(logits[kk] - hi);
    total += logits[kk];
  }
  for (double& w : logits) w /= total;
  return Array({k}, std::move(logits));
}

Var soft_quantize(Tape& tape, Var batch, std::span<const Var> books, double tau_q) {
  if (!(tau_q > 0.0)) throw std::invalid_argument("soft_quantize: tau_q must be positive");
  if (books.empty()) throw std::invalid_argument("soft_quantize: no codebooks");
  const Array& x = tape.value(batch);
  const std::size_t m = books.size();
  const std::size_t sub = tape.value(books[0]).cols();
  if (x.cols() != m * sub)
    throw std::invalid_argument("soft_quantize: batch dim " + std::to_string(x.cols()) +
                                " != M*sub_dim " + std::to_string(m * sub));
  std::vector<Var> parts;
  parts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Var sub_x = slice_cols(batch, i * sub, (i + 1) * sub);
    Var dist = pairwise_sqdist(sub_x, books[i]);        // B x K
    Var weights = softmax_rows(scale(dist, -1.0 / tau_q));
    parts.push_back(matmul(weights, books[i]));         // B x sub_dim
  }
  return concat_cols(parts);
}

Array soft_quantize_eval(const Array& batch, const Codebook& codebook, double tau_q) {
  Tape tape;
  Var x = tape.constant(batch);
  std::vector<Var> books;
  books.reserve(codebook.codebook_count());
  for (std::size_t i = 0; i < codebook.codebook_count(); ++i)
    books.push_back(tape.constant(codebook.book(i)));
  return tape.value(soft_quantize(tape, x, books, tau_q));
}

HardQuantizeResult hard_quantize(const Array& batch, const Codebook& codebook) {
  const std::size_t m = codebook.codebook_count();
  const std::size_t k = codebook.codeword_count();
  const std::size_t sub = codebook.sub_dim();
  if (batch.cols() != codebook.dim())
    throw std::invalid_argument("hard_quantize: batch dim " + std::to_string(batch.cols()) +
                                " != codebook dim " + std::to_string(codebook.dim()));
  const std::size_t rows = batch.rows();
  HardQuantizeResult result;
  result.quantized = Array({rows, codebook.dim()});
  result.indices.assign(rows * m, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      const Array& book = codebook.book(i);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_k = 0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        double s = 0.0;
        for (std::size_t d = 0; d < sub; ++d) {
          const double diff = batch.at(r, i * sub + d) - book.at(kk, d);
          s += diff * diff;
        }
        if (s < best) {  // strict: ties keep the lowest index
          best = s;
          best_k = kk;
        }
      }
      result.indices[r * m + i] = static_cast<std::uint32_t>(best_k);
      for (std::size_t d = 0; d < sub; ++d)
        result.quantized.at(r, i * sub + d) = book.at(best_k, d);
    }
  }
  return result;
}

}  // namespace cucl
