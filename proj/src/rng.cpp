#include "uibd/rng.hpp"

#include <cmath>

#include "uibd/common.hpp"

namespace uibd {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

Rng::Rng(uint64_t seed) : seed_(seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
  require(lo <= hi, "uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::gaussian() {
  // u1 in (0,1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Rng Rng::fork(uint64_t stream_id) const {
  uint64_t x = seed_ ^ (0xa0761d6478bd642fULL + stream_id * 0xe7037ed1a0b428dbULL);
  return Rng(splitmix64(x));
}

void Rng::shuffle(std::vector<int>& v) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = next_u64() % i;
    std::swap(v[i - 1], v[j]);
  }
}

Tensor gaussian_sample(const std::vector<int>& shape, Rng& rng) {
  require(!shape.empty(), "gaussian_sample: shape must be non-empty");
  for (int d : shape) require(d >= 1, "gaussian_sample: shape dims must be >= 1");
  Tensor out(shape);
  for (size_t i = 0; i < out.size(); ++i) out[i] = rng.gaussian();
  return out;
}

}  // namespace uibd
