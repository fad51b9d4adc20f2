#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace shadownet {

// One block of the Philox4x32-10 counter-based generator ("philox4x32-10/v1" in
// docs/FORMAT.md). Pure function of (counter, key); pinned by published
// known-answer vectors in the tests.
std::array<uint32_t, 4> philox4x32_10(const std::array<uint32_t, 4>& counter,
                                      const std::array<uint32_t, 2>& key);

uint64_t splitmix64(uint64_t x);

// Splittable deterministic generator. A (seed, stream) pair names an
// independent sequence; split() derives child streams without touching the
// parent's state. Identical (seed, stream, draw sequence) gives identical
// values on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  // Child stream; the parent is not advanced.
  Rng split(uint64_t child) const;

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

  uint32_t next_u32();
  uint64_t next_u64();

  // [0, 1), 32-bit resolution.
  double u01();
  // [a, b).
  double uniform(double a, double b);
  // [0, bound), rejection sampled; bound > 0.
  uint32_t uniform_int(uint32_t bound);
  // Signed magnitude draw: sign uniform, |x| in [lo, hi).
  double signed_uniform(double lo, double hi);
  // Uniform k in [-half_range, half_range], returned as k / 2^scale_bits.
  // All results are exactly representable dyadic rationals.
  double dyadic(int half_range, int scale_bits);
  // Fisher-Yates permutation of [0, n).
  std::vector<int> permutation(int n);

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t block_ = 0;
  std::array<uint32_t, 4> buf_{};
  int pos_ = 4;  // buffered words consumed
};

}  // namespace shadownet
