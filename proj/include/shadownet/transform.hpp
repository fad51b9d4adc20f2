#pragma once

#include <cstdint>
#include <vector>

#include "shadownet/rng.hpp"
#include "shadownet/tensor.hpp"

namespace shadownet {

// Secret sampling domain. `continuous` is the production default. `dyadic`
// restricts every secret value to exactly representable dyadic rationals
// (lambdas are signed powers of two), which makes the double-precision
// reference pipeline exact end to end; used by the bitwise test legs.
enum class SecretDomain { continuous, dyadic };

struct ObfuscationParams {
  double ratio = 1.2;         // kernel expansion factor r >= 1
  double scalar_bound = 1.0;  // t: scalars drawn from +-[scalar_floor, t]
  double scalar_floor = 0.05; // lower magnitude bound for channel scalars
  double mask_scale = 1.0;    // boundary mask magnitude; 0 disables (debug)
  uint64_t seed = 0;
  SecretDomain domain = SecretDomain::continuous;

  void validate() const;
  bool operator==(const ObfuscationParams&) const = default;
};

// Expanded kernel count m for n original kernels: the kernel count scales by
// the ratio, truncated (m = floor(r*n), with a guard absorbing float dust so
// exact products stay exact). r >= 1 implies m >= n.
int expanded_kernel_count(int n, double ratio);

// Secret material for one standard/pointwise convolution:
//   intermediate kernel i (i < n):  lambda_i * W_i + F[C[i]]
//   intermediate kernel n + j:      F[j]           (j < m - n)
//   output position of intermediate kernel k is perm[k].
// When m == n there are no filler kernels and real kernels are only scaled.
template <typename T>
struct ConvSecret {
  int n = 0;
  int m = 0;
  std::vector<double> lambdas;  // n channel scalars, sign included
  Tensor<T> filler;             // (kh, kw, cin, m - n); empty when m == n
  std::vector<int> index_c;     // n picks into filler; empty when m == n
  std::vector<int> perm;        // permutation of [0, m)

  bool operator==(const ConvSecret&) const = default;
};

// Secret material for one depthwise convolution: kernels scaled and permuted;
// the input is counter-scaled and permuted the same way so outputs only need
// the inverse permutation.
template <typename T>
struct DwSecret {
  int n = 0;
  std::vector<double> lambdas;  // n
  std::vector<int> perm;        // permutation of [0, n)

  bool operator==(const DwSecret&) const = default;
};

// Canonical elementwise programs. All weight transformation arithmetic runs
// through these two functions (double compute, one rounding to storage), so a
// verifier can replay it bit-for-bit.
template <typename T>
inline T transformed_weight_element(double lambda, double w, double f) {
  double v = lambda * w;
  v += f;
  return T(v);
}

template <typename T>
inline T scaled_weight_element(double lambda, double w) {
  return T(lambda * w);
}

// Draw order (fixed contract): lambdas, filler, index_c, perm.
template <typename T>
ConvSecret<T> gen_conv_secret(int n, int kh, int kw, int cin,
                              const ObfuscationParams& p, Rng& rng);

template <typename T>
DwSecret<T> gen_dw_secret(int n, const ObfuscationParams& p, Rng& rng);

// (kh, kw, cin, n) -> (kh, kw, cin, m).
template <typename T>
Tensor<T> transform_conv(const Tensor<T>& w, const ConvSecret<T>& s);

// Sparse pointwise restoring filter (1, 1, m, n): column i carries +1/lambda_i
// at channel perm[i] and, when m > n, -1/lambda_i at channel perm[n + C[i]].
template <typename T>
Tensor<T> restore_filter(const ConvSecret<T>& s);

// (kh, kw, n) -> (kh, kw, n), scaled and permuted.
template <typename T>
Tensor<T> transform_dwconv(const Tensor<T>& w, const DwSecret<T>& s);

// Scatter shuffle parameters (out[perm[i]] = in[i] * scale[i]) for the two
// channel shuffles around a transformed depthwise conv: the input-side shuffle
// divides channel i by lambda_i and permutes; the output-side shuffle is the
// inverse permutation with unit scales.
template <typename T>
std::vector<T> dw_input_scales(const DwSecret<T>& s);

std::vector<int> invert_perm(const std::vector<int>& perm);

}  // namespace shadownet
