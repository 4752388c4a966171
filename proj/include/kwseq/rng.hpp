#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace kwseq {

/// Counter-based generator (Philox4x32-10). The full state is (key, stream,
/// counter), so independent streams can be derived with fork() without
/// sharing mutable state between consumers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  // Independent generator for a sub-task identified by `id`.
  Rng fork(std::uint64_t id) const;

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  bool bernoulli(double p);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return key_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t buffer_[2] = {0, 0};
  int buffered_ = 0;
};

}  // namespace kwseq
