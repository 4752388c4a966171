#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "kwseq/ops.hpp"
#include "kwseq/rng.hpp"
#include "kwseq/tensor.hpp"

namespace fd {

inline kwseq::Tensor random_tensor(kwseq::Shape shape, kwseq::Rng& rng, double scale = 1.0,
                                   bool grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return kwseq::Tensor(std::move(shape), std::move(v), grad);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Worst relative error between backward() and central differences of
// `loss` over every entry of every input.
inline double max_grad_error(std::vector<kwseq::Tensor>& inputs,
                             const std::function<kwseq::Tensor()>& loss, double h = 1e-5,
                             double floor = 1e-8) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  double worst = 0.0;
  kwseq::NoGradGuard ng;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = loss().item();
      v[i] = keep - h;
      const double down = loss().item();
      v[i] = keep;
      worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h), floor));
    }
  }
  return worst;
}

// Projects a tensor to a scalar with fixed pseudo-random weights so every
// output entry contributes a distinct gradient.
inline kwseq::Tensor project(const kwseq::Tensor& y, std::uint64_t seed = 99) {
  kwseq::Rng rng(seed);
  return kwseq::sum(kwseq::mul(y, random_tensor(y.shape(), rng, 1.0, false)));
}

}  // namespace fd
