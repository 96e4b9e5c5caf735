#ifndef UIBD_RNG_HPP_
#define UIBD_RNG_HPP_

#include <cstdint>
#include <vector>

#include "uibd/tensor.hpp"

namespace uibd {

// Deterministic, portable random stream. The generator is xoshiro256++ with
// splitmix64 state expansion; this choice is part of the file-format-level
// reproducibility contract and must not change between versions. Gaussian
// draws use the Box-Muller transform (cosine branch, one draw per two
// uniforms).
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t seed() const { return seed_; }
  uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  // Standard normal draw.
  double gaussian();

  // Independent child stream derived from (seed, stream_id); the parent
  // state is not consumed.
  Rng fork(uint64_t stream_id) const;

  // Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<int>& v);

 private:
  uint64_t seed_;
  uint64_t s_[4];
};

// i.i.d. standard normal tensor; errors on empty shapes.
Tensor gaussian_sample(const std::vector<int>& shape, Rng& rng);

}  // namespace uibd

#endif  // UIBD_RNG_HPP_
