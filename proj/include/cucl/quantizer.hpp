#pragma once

#include <cstdint>
#include <vector>

#include "cucl/array.hpp"
#include "cucl/rng.hpp"
#include "cucl/tape.hpp"

namespace cucl {

struct QuantizerConfig {
  std::size_t codebook_count = 8;  // M
  std::size_t codeword_count = 8;  // K per codebook
  std::size_t sub_dim = 16;        // D / M
  double tau_q = 5.0;              // quantization temperature

  std::size_t dim() const { return codebook_count * sub_dim; }
  void validate() const;
};

// M sub-codebooks of K codewords each, dimension sub_dim. Codewords are
// trainable; they persist across tasks and are never reinitialized.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t codebook_count, std::size_t codeword_count, std::size_t sub_dim);

  // Codewords ~ N(slot mean, slot stddev^2), with the per-codebook scale taken
  // from the empirical subvector statistics of `batch` (B x D). Guarantees no
  // two codewords within a codebook are bit-identical.
  static Codebook init_from_batch(const QuantizerConfig& config, const Array& batch,
                                  Rng& rng);

  std::size_t codebook_count() const { return books_.size(); }
  std::size_t codeword_count() const { return books_.empty() ? 0 : books_[0].rows(); }
  std::size_t sub_dim() const { return books_.empty() ? 0 : books_[0].cols(); }
  std::size_t dim() const { return codebook_count() * sub_dim(); }

  Array& book(std::size_t i) { return books_[i]; }             // K x sub_dim
  const Array& book(std::size_t i) const { return books_[i]; }

  bool operator==(const Codebook& other) const { return books_ == other.books_; }

 private:
  std::vector<Array> books_;
};

// Contiguous subvector slices of a D-vector; concatenation restores x exactly.
std::vector<Array> split(const Array& x, std::size_t parts);

// Squared Euclidean distance between equal-dimension vectors.
double codeword_distance(const Array& x, const Array& c);

// softmax_k(-dis(x, c_k) / tau_q) over one codebook (K x sub_dim).
Array soft_assign(const Array& x, const Array& codebook, double tau_q);

// Differentiable product quantization of a batch: each subvector becomes the
// assignment-weighted convex combination of its codewords, reassembled to B x D.
Var soft_quantize(Tape& tape, Var batch, std::span<const Var> books, double tau_q);

// Convenience forward-only evaluation through a throwaway tape.
Array soft_quantize_eval(const Array& batch, const Codebook& codebook, double tau_q);

struct HardQuantizeResult {
  Array quantized;                    // B x D, selected codewords
  std::vector<std::uint32_t> indices; // B x M row-major argmin indices
};

// Nearest-codeword assignment; ties go to the lowest codeword index.
HardQuantizeResult hard_quantize(const Array& batch, const Codebook& codebook);

}  // namespace cucl
