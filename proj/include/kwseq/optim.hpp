#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kwseq/tensor.hpp"

namespace kwseq {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators, one pair per parameter in registration
// order.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static AdamState for_parameters(std::span<const NamedTensor> params, AdamOptions options);
  std::vector<NamedTensor> to_tensors() const;
  static AdamState from_tensors(const std::vector<NamedTensor>& tensors, AdamOptions options);
};

// One bias-corrected Adam update from the gradients stored on `params`.
// Throws NumericError naming the parameter when a gradient is not finite.
void adam_step(std::span<const NamedTensor> params, AdamState& state);

// Rescales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::span<const NamedTensor> params, double max_norm);

void zero_grads(std::span<const NamedTensor> params);

}  // namespace kwseq
