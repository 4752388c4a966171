#include "kwseq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace kwseq {

namespace {

using detail::Node;

// Grad buffer of parent `i`, or nullptr when that parent needs no gradient.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

const std::vector<double>& parent_value(Node& self, std::size_t i) {
  return self.parents[i]->value;
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<long>(tail.size()));
}

void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) +
                     " onto " + shape_string(a.shape()));
  }
}

void check_rank2(const char* op, const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " +
                     shape_string(x.shape()));
  }
}

struct MatmulDims {
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool a_batched = false, b_batched = false;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&] {
    throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " and " +
                     shape_string(sb));
  };
  MatmulDims d;
  if (sa.size() == 2 && sb.size() == 2) {
    d.m = sa[0], d.k = sa[1], d.n = sb[1];
    if (sb[0] != d.k) fail();
  } else if (sa.size() == 3 && sb.size() == 3) {
    d.batch = sa[0], d.m = sa[1], d.k = sa[2], d.n = sb[2];
    d.a_batched = d.b_batched = true;
    if (sb[0] != d.batch || sb[1] != d.k) fail();
  } else if (sa.size() == 3 && sb.size() == 2) {
    d.batch = sa[0], d.m = sa[1], d.k = sa[2], d.n = sb[1];
    d.a_batched = true;
    if (sb[0] != d.k) fail();
  } else {
    fail();
  }
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape out_shape = d.a_batched ? Shape{d.batch, d.m, d.n} : Shape{d.m, d.n};
  std::vector<double> out(d.batch * d.m * d.n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* A = av.data() + (d.a_batched ? bi * d.m * d.k : 0);
    const double* B = bv.data() + (d.b_batched ? bi * d.k * d.n : 0);
    double* C = out.data() + bi * d.m * d.n;
    for (std::size_t i = 0; i < d.m; ++i) {
      double* crow = C + i * d.n;
      for (std::size_t p = 0; p < d.k; ++p) {
        const double aip = A[i * d.k + p];
        const double* brow = B + p * d.n;
        for (std::size_t j = 0; j < d.n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  return Tensor::from_op("matmul", std::move(out_shape), std::move(out), {a, b},
                         [d](Node& self) {
    const auto& g = self.grad;
    const auto& A_all = parent_value(self, 0);
    const auto& B_all = parent_value(self, 1);
    std::vector<double>* ga = parent_grad(self, 0);
    std::vector<double>* gb = parent_grad(self, 1);
    for (std::size_t bi = 0; bi < d.batch; ++bi) {
      const double* G = g.data() + bi * d.m * d.n;
      const std::size_t a_off = d.a_batched ? bi * d.m * d.k : 0;
      const std::size_t b_off = d.b_batched ? bi * d.k * d.n : 0;
      if (ga) {
        const double* B = B_all.data() + b_off;
        double* GA = ga->data() + a_off;
        for (std::size_t i = 0; i < d.m; ++i) {
          const double* grow = G + i * d.n;
          for (std::size_t p = 0; p < d.k; ++p) {
            const double* brow = B + p * d.n;
            double acc = 0.0;
            for (std::size_t j = 0; j < d.n; ++j) acc += grow[j] * brow[j];
            GA[i * d.k + p] += acc;
          }
        }
      }
      if (gb) {
        const double* A = A_all.data() + a_off;
        double* GB = gb->data() + b_off;
        for (std::size_t i = 0; i < d.m; ++i) {
          const double* grow = G + i * d.n;
          for (std::size_t p = 0; p < d.k; ++p) {
            const double aip = A[i * d.k + p];
            double* gbrow = GB + p * d.n;
            for (std::size_t j = 0; j < d.n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 3) {
    throw ShapeError("transpose expects rank 2 or 3, got " + shape_string(s));
  }
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t rows = s[s.size() - 2];
  const std::size_t cols = s[s.size() - 1];
  Shape out_shape = s;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  std::vector<double> out(x.size());
  const auto v = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t off = b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[off + j * rows + i] = v[off + i * cols + j];
  }
  return Tensor::from_op("transpose", std::move(out_shape), std::move(out), {x},
                         [batch, rows, cols](Node& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = b * rows * cols;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          (*gx)[off + i * cols + j] += self.grad[off + j * rows + i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_broadcast("add", a, b);
  const std::size_t inner = b.size();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  if (inner > 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  }
  return Tensor::from_op("add", a.shape(), std::move(out), {a, b}, [inner](Node& self) {
    if (auto* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % inner] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_broadcast("sub", a, b);
  const std::size_t inner = b.size();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  if (inner > 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % inner];
  }
  return Tensor::from_op("sub", a.shape(), std::move(out), {a, b}, [inner](Node& self) {
    if (auto* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % inner] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_broadcast("mul", a, b);
  const std::size_t inner = b.size();
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  if (inner > 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % inner];
  }
  return Tensor::from_op("mul", a.shape(), std::move(out), {a, b}, [inner](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (auto* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        (*ga)[i] += self.grad[i] * bv[i % inner];
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        (*gb)[i % inner] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  return Tensor::from_op("scale", x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (auto* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i] * factor;
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::from_op("sum", Shape{}, {total}, {x}, [](Node& self) {
    if (auto* gx = parent_grad(self, 0)) {
      for (double& g : *gx) g += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, v[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return Tensor::from_op("softmax", s, std::move(out), {x}, [outer, inner, n](Node& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          (*gx)[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.empty() || s.back() == 0) throw ShapeError("log_softmax on shape " + shape_string(s));
  const std::size_t n = s.back();
  const std::size_t rows = x.size() / n;
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] - lse;
  }
  return Tensor::from_op("log_softmax", s, std::move(out), {x}, [rows, n](Node& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = r * n + j;
        (*gx)[idx] += self.grad[idx] - std::exp(self.value[idx]) * gsum;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Shape& s = x.shape();
  if (s.empty() || s.back() < 1) {
    throw ShapeError("layer_norm: last axis must have size >= 1, got " + shape_string(s));
  }
  const std::size_t n = s.back();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias sizes " + shape_string(gain.shape()) + "/" +
                     shape_string(bias.shape()) + " do not match last axis " +
                     std::to_string(n));
  }
  const std::size_t rows = x.size() / n;
  const auto v = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(v.size());
  std::vector<double> xhat(v.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor::from_op(
      "layer_norm", s, std::move(out), {x, gain, bias},
      [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& g = self.grad;
        const auto& gv = parent_value(self, 1);
        auto* gx = parent_grad(self, 0);
        auto* ggain = parent_grad(self, 1);
        auto* gbias = parent_grad(self, 2);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * n;
          if (ggain || gbias) {
            for (std::size_t j = 0; j < n; ++j) {
              if (ggain) (*ggain)[j] += g[off + j] * xhat[off + j];
              if (gbias) (*gbias)[j] += g[off + j];
            }
          }
          if (gx) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = g[off + j] * gv[j];
              mean_d += d;
              mean_dx += d * xhat[off + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = g[off + j] * gv[j];
              (*gx)[off + j] += inv_std[r] * (d - mean_d - xhat[off + j] * mean_dx);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * std::numbers::sqrt2 / 2.0));
  }
  return Tensor::from_op("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xv = parent_value(self, 0);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double u = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(u * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * u * u);
      (*gx)[i] += self.grad[i] * (cdf + u * pdf);
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw InvalidArgument("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return Tensor::from_op("dropout", x.shape(), std::move(out), {x},
                         [mask = std::move(mask)](Node& self) {
    if (auto* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) (*gx)[i] += self.grad[i] * mask[i];
    }
  });
}

CrossEntropySum cross_entropy_sum(const Tensor& logits, std::span<const int> targets,
                                  int ignore_id) {
  check_rank2("cross_entropy", logits);
  const std::size_t rows = logits.dim(0);
  const std::size_t vocab = logits.dim(1);
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " logit rows");
  }
  const auto v = logits.values();
  std::vector<double> probs(v.size(), 0.0);
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = tgt[r];
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw InvalidArgument("cross_entropy: target id " + std::to_string(t) +
                            " outside vocabulary of size " + std::to_string(vocab));
    }
    const double* row = v.data() + r * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < vocab; ++j) probs[r * vocab + j] = std::exp(row[j] - mx) / z;
    total += -(row[t] - mx - std::log(z));
    ++count;
  }
  Tensor loss = Tensor::from_op(
      "cross_entropy", Shape{}, {total}, {logits},
      [rows, vocab, ignore_id, tgt = std::move(tgt), probs = std::move(probs)](Node& self) {
        auto* gx = parent_grad(self, 0);
        if (!gx) return;
        const double g = self.grad[0];
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] == ignore_id) continue;
          for (std::size_t j = 0; j < vocab; ++j) (*gx)[r * vocab + j] += g * probs[r * vocab + j];
          (*gx)[r * vocab + static_cast<std::size_t>(tgt[r])] -= g;
        }
      });
  return {loss, count};
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id) {
  CrossEntropySum s = cross_entropy_sum(logits, targets, ignore_id);
  const double norm = s.count == 0 ? 0.0 : 1.0 / static_cast<double>(s.count);
  return scale(s.loss, norm);
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  check_rank2("gather_rows", table);
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InvalidArgument("gather_rows: id " + std::to_string(id) + " outside table of " +
                            std::to_string(vocab) + " rows");
    }
  }
  const auto tv = table.values();
  std::vector<double> out(idx.size() * width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[r]) * width, width,
                out.data() + r * width);
  }
  const std::size_t count = idx.size();
  return Tensor::from_op("gather_rows", Shape{count, width}, std::move(out), {table},
                         [width, idx = std::move(idx)](Node& self) {
    auto* gt = parent_grad(self, 0);
    if (!gt) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = gt->data() + static_cast<std::size_t>(idx[r]) * width;
      const double* src = self.grad.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  check_rank2("slice_rows", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > rows) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const auto v = x.values();
  std::vector<double> out(v.begin() + static_cast<long>(begin * cols),
                          v.begin() + static_cast<long>(end * cols));
  return Tensor::from_op("slice_rows", Shape{end - begin, cols}, std::move(out), {x},
                         [begin, cols](Node& self) {
    if (auto* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[begin * cols + i] += self.grad[i];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  check_rank2("slice_cols", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto v = x.values();
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(v.data() + r * cols + begin, w, out.data() + r * w);
  return Tensor::from_op("slice_cols", Shape{rows, w}, std::move(out), {x},
                         [rows, cols, begin, w](Node& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) (*gx)[r * cols + begin + j] += self.grad[r * w + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of zero tensors");
  const std::size_t cols = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    check_rank2("concat_rows", p);
    if (p.dim(1) != cols) {
      throw ShapeError("concat_rows: width " + std::to_string(p.dim(1)) + " vs " +
                       std::to_string(cols));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor::from_op("concat_rows", Shape{rows, cols}, std::move(out), parts,
                         [offsets = std::move(offsets)](Node& self) {
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      auto* gp = parent_grad(self, i);
      if (!gp) continue;
      for (std::size_t j = 0; j < gp->size(); ++j) (*gp)[j] += self.grad[offsets[i] + j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of zero tensors");
  const std::size_t rows = parts.front().rank() == 2 ? parts.front().dim(0) : 0;
  std::size_t cols = 0;
  std::vector<std::size_t> widths, starts;
  for (const Tensor& p : parts) {
    check_rank2("concat_cols", p);
    if (p.dim(0) != rows) {
      throw ShapeError("concat_cols: height " + std::to_string(p.dim(0)) + " vs " +
                       std::to_string(rows));
    }
    starts.push_back(cols);
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto v = parts[i].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[i], widths[i], out.data() + r * cols + starts[i]);
  }
  return Tensor::from_op("concat_cols", Shape{rows, cols}, std::move(out), parts,
                         [rows, cols, widths = std::move(widths),
                          starts = std::move(starts)](Node& self) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      auto* gp = parent_grad(self, i);
      if (!gp) continue;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < widths[i]; ++j)
          (*gp)[r * widths[i] + j] += self.grad[r * cols + starts[i] + j];
    }
  });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  const Shape inner = parts.front().shape();
  for (const Tensor& p : parts) {
    if (p.shape() != inner) {
      throw ShapeError("stack: shape " + shape_string(p.shape()) + " vs " + shape_string(inner));
    }
  }
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), inner.begin(), inner.end());
  const std::size_t n = numel(inner);
  std::vector<double> out;
  out.reserve(parts.size() * n);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::from_op("stack", std::move(out_shape), std::move(out), parts, [n](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto* gp = parent_grad(self, i);
      if (!gp) continue;
      for (std::size_t j = 0; j < n; ++j) (*gp)[j] += self.grad[i * n + j];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return Tensor::from_op("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    if (auto* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
  });
}

Tensor straight_through(std::vector<double> hard, const Tensor& soft) {
  if (hard.size() != soft.size()) {
    throw ShapeError("straight_through: value count mismatch for " + shape_string(soft.shape()));
  }
  return Tensor::from_op("straight_through", soft.shape(), std::move(hard), {soft},
                         [](Node& self) {
    if (auto* gs = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gs)[i] += self.grad[i];
    }
  });
}

}  // namespace kwseq
