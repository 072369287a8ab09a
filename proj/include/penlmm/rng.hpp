#pragma once

// Reproducible random streams. Engines are std::mt19937_64; substreams are
// seeded by hashing (parent seed, index) with SplitMix64, so a run or a group
// can be regenerated on its own. Uniform and normal variates are produced here
// rather than by the standard distributions, whose algorithms are
// implementation-defined.

#include <cstdint>
#include <random>

namespace penlmm {

std::uint64_t splitmix64(std::uint64_t x);
// Seed of substream `index` under `parent`.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Rng substream(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

  // Uniform on (0, 1) with 53 random bits.
  double uniform();
  // Standard normal by the Marsaglia polar method.
  double normal();

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace penlmm
