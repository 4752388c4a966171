#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kwseq/rng.hpp"
#include "kwseq/tensor.hpp"

namespace kwseq {

// Matrix product. Supports (m×k)(k×n), (B×m×k)(B×k×n) and (B×m×k)(k×n).
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes (rank 2 or 3).
Tensor transpose(const Tensor& x);

// Elementwise ops. `b` may equal a's shape or be a trailing suffix of it, in
// which case it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x);  // last axis

inline constexpr double kLayerNormEps = 1e-5;
// Normalises every last-axis slice, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

Tensor gelu(const Tensor& x);

// Inverted dropout. Returns `x` itself when not training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// Sum of -log softmax(logits)[target] over rows whose target != ignore_id.
struct CrossEntropySum {
  Tensor loss;
  std::size_t count = 0;
};
CrossEntropySum cross_entropy_sum(const Tensor& logits, std::span<const int> targets,
                                  int ignore_id);
// Mean over non-ignored rows (0 when every row is ignored).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id);

// Row lookup into a (V×d) table.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

// Rank-2 slicing and concatenation. Zero-length pieces are allowed.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);

// Forward value `hard`, gradient routed unchanged to `soft`.
Tensor straight_through(std::vector<double> hard, const Tensor& soft);

}  // namespace kwseq
