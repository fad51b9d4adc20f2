#include "shadownet/rng.hpp"

#include "shadownet/error.hpp"

namespace shadownet {

namespace {
constexpr uint32_t kM0 = 0xD2511F53u;
constexpr uint32_t kM1 = 0xCD9E8D57u;
constexpr uint32_t kW0 = 0x9E3779B9u;
constexpr uint32_t kW1 = 0xBB67AE85u;
}  // namespace

std::array<uint32_t, 4> philox4x32_10(const std::array<uint32_t, 4>& counter,
                                      const std::array<uint32_t, 2>& key) {
  std::array<uint32_t, 4> c = counter;
  std::array<uint32_t, 2> k = key;
  for (int round = 0; round < 10; ++round) {
    const uint64_t p0 = uint64_t(kM0) * c[0];
    const uint64_t p1 = uint64_t(kM1) * c[2];
    const uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
    const uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

Rng Rng::split(uint64_t child) const {
  return Rng(seed_, splitmix64(stream_ ^ (child + 0x9E3779B97F4A7C15ull)));
}

uint32_t Rng::next_u32() {
  if (pos_ == 4) {
    const std::array<uint32_t, 4> ctr = {
        uint32_t(block_), uint32_t(block_ >> 32),
        uint32_t(stream_), uint32_t(stream_ >> 32)};
    const std::array<uint32_t, 2> key = {uint32_t(seed_), uint32_t(seed_ >> 32)};
    buf_ = philox4x32_10(ctr, key);
    ++block_;
    pos_ = 0;
  }
  return buf_[pos_++];
}

uint64_t Rng::next_u64() {
  const uint64_t lo = next_u32();
  const uint64_t hi = next_u32();
  return lo | (hi << 32);
}

double Rng::u01() {
  return double(next_u32()) * 0x1p-32;
}

double Rng::uniform(double a, double b) {
  return a + u01() * (b - a);
}

uint32_t Rng::uniform_int(uint32_t bound) {
  if (bound == 0) throw InvalidParams("uniform_int: bound must be positive");
  // Rejection keeps the distribution exactly uniform.
  const uint32_t threshold = uint32_t(-bound) % bound;  // 2^32 mod bound
  for (;;) {
    const uint32_t u = next_u32();
    if (u >= threshold) return u % bound;
  }
}

double Rng::signed_uniform(double lo, double hi) {
  const double mag = uniform(lo, hi);
  return (next_u32() & 1u) ? -mag : mag;
}

double Rng::dyadic(int half_range, int scale_bits) {
  const int k = int(uniform_int(uint32_t(2 * half_range + 1))) - half_range;
  return double(k) / double(1u << scale_bits);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = int(uniform_int(uint32_t(i + 1)));
    std::swap(p[i], p[j]);
  }
  return p;
}

}  // namespace shadownet
