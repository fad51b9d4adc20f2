#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shadownet/graph.hpp"
#include "shadownet/runtime.hpp"
#include "shadownet/transform.hpp"

namespace shadownet {

// One claimed factorization of a transformed filter bank: which output
// positions hold pure filler (omega), where each candidate kernel landed
// (sigma), and the scalar/filler pairing that reproduces the published
// weights exactly.
struct PreimageWitness {
  std::vector<int> omega;       // filler output positions, strictly increasing
  std::vector<int> sigma;       // output position of candidate kernel i
  std::vector<double> lambdas;  // candidate channel scalars
  std::vector<int> mask_choice; // filler index added to candidate kernel i

  bool operator==(const PreimageWitness&) const = default;
};

struct FeasiblePreimage {
  TensorD kernels;  // (kh, kw, cin, n) candidate original weights
  PreimageWitness witness;
};

// Samples `count` pairwise-distinct candidate parameter sets, each of which
// replays to `transformed` bit for bit through the canonical weight program.
// The candidate scalars are signed powers of two inside the configured band,
// which keeps the reconstruction arithmetic exact.
std::vector<FeasiblePreimage> sample_preimages(const TensorF& transformed,
                                               int n, int count,
                                               const ObfuscationParams& prm,
                                               uint64_t seed);

// The generating secret rewritten as a witness in the adversary's
// coordinates; verifies like any sampled candidate.
FeasiblePreimage true_preimage(const TensorF& original,
                               const ConvSecret<float>& s);

// Structural checks plus a full bitwise replay.
bool verify_preimage(const TensorF& transformed, const FeasiblePreimage& p,
                     const ObfuscationParams& prm);

// Depthwise analogue: a permutation and per-channel scalars.
struct DwPreimage {
  TensorD kernels;  // (kh, kw, n)
  std::vector<double> lambdas;
  std::vector<int> perm;

  bool operator==(const DwPreimage&) const = default;
};

std::vector<DwPreimage> dw_sample_preimages(const TensorF& transformed,
                                            int count,
                                            const ObfuscationParams& prm,
                                            uint64_t seed);
DwPreimage dw_true_preimage(const TensorF& original, const DwSecret<float>& s);
bool dw_verify_preimage(const TensorF& transformed, const DwPreimage& p,
                        const ObfuscationParams& prm);

// Binomial C(m, k): how many filler-position classes a transformed bank of m
// kernels admits. Throws when the count does not fit 64 bits.
uint64_t witness_class_count(int m, int k);

struct ParamCounts {
  uint64_t victim = 0;
  uint64_t adversary = 0;
};

// Parameters each side must pin down, summed over outsourced layers. The
// victim counts its chosen kernel entries (plus 4 per-channel terms where a
// batchnorm follows); the adversary faces the restore mix of every expanded
// bank (m*n entries per layer, n*n for depthwise) plus the same batchnorm
// terms.
ParamCounts count_equivalent_params(const ModelGraph& g, double ratio);

struct AuditRow {
  std::string layer;
  bool masked = false;
  double eta = 0;          // distance of the observed input from the clean one
  uint64_t equations = 0;  // values observed at this boundary
  uint64_t unknowns = 0;   // free parameters consistent with them
};

struct AuditReport {
  bool masked_ok = true;    // every masked boundary sits far from clean
  bool unmasked_ok = true;  // unmasked boundaries carry exactly the raw input
  bool verbatim_ok = true;  // no original kernel appears verbatim in part A
  double min_masked_eta = 0;
  std::vector<AuditRow> rows;

  bool ok() const { return masked_ok && unmasked_ok && verbatim_ok; }
};

// Checks one recorded round against the original model: masked boundaries
// must differ from clean activations, unmasked ones must be the raw input,
// and no published kernel may leak an original kernel column bit for bit.
AuditReport audit_view(const AdversaryView& view, const ModelGraph& original,
                       double mask_threshold = 1e-2);

}  // namespace shadownet
