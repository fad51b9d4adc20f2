#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shadownet/graph.hpp"
#include "shadownet/rng.hpp"
#include "shadownet/tensor.hpp"

namespace shadownet {

// One masked boundary: a fresh random mask M is added to the named layer's
// input before it leaves the trusted side, and the pre-computed term
// U = op(M, original_weights) is subtracted from the restored output.
struct MaskSlot {
  std::string layer;       // outsourced layer this slot protects
  Shape shape;             // shape of M (the layer's input)
  double scale = 1.0;      // mask magnitude mu; 0 disables the mask (debug)
  LayerKind op = LayerKind::conv;  // conv | pwconv | dwconv
  int stride = 1;
  Padding padding = Padding::valid;
  bool flatten_input = false;
  int orig_weights = -1;   // original kernel tensor id
  Shape u_shape;           // restored output shape

  bool operator==(const MaskSlot& o) const;
};

// Masks and unmask terms for one round.
struct MaskState {
  uint64_t round = 0;
  std::vector<TensorF> m;  // per slot
  std::vector<TensorF> u;  // per slot
};

// Derivation contract (docs/FORMAT.md): slot i draws from
// Rng(seed, stream=round).split(i), elements uniform(-scale, scale) in
// storage order; then U = op(M, original weights).
MaskState generate_round_masks(const std::vector<MaskSlot>& slots,
                               const std::vector<TensorF>& tensors,
                               uint64_t seed, uint64_t round);

// Same derivation written into preallocated state (no allocation); shapes
// must already match. Used by the secure executor between rounds.
void regenerate_masks_inplace(const std::vector<MaskSlot>& slots,
                              const std::vector<TensorF>& tensors,
                              uint64_t seed, uint64_t round, MaskState& state);

}  // namespace shadownet
