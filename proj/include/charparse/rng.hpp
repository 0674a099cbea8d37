#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace charparse {

/// Seeded random source used everywhere randomness enters the pipeline.
/// Distributions are computed from raw engine bits so results do not depend
/// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename Seq>
  void shuffle(Seq& seq) {
    for (std::size_t i = seq.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(seq[i - 1], seq[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream index; used for per-sentence, per-trial
/// and per-cell seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace charparse
