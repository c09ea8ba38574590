#pragma once

#include <cstdint>
#include <iterator>
#include <utility>

namespace cts {

/// Counter-based random stream. The n-th draw depends only on (seed, n), so
/// streams are reproducible across runs, compilers and platforms.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Box-Muller; consumes two draws.
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Independent stream derived from this state's seed.
  RngState fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Fisher-Yates shuffle. std::shuffle is implementation-defined, this is not.
template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, RngState& rng) {
  auto n = static_cast<std::uint64_t>(std::distance(first, last));
  for (std::uint64_t i = n; i > 1; --i) {
    auto j = rng.below(i);
    using std::swap;
    swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
  }
}

}  // namespace cts
