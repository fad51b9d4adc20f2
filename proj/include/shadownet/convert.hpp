#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shadownet/graph.hpp"
#include "shadownet/masking.hpp"
#include "shadownet/transform.hpp"

namespace shadownet {

// Secrets retained for one obfuscated layer.  Exactly one of conv/dw is set.
struct SecretRecord {
  std::string layer;
  bool depthwise = false;
  std::optional<ConvSecret<float>> conv;
  std::optional<DwSecret<float>> dw;
  int orig_weights = -1;  // weight id in the converted graph, -1 if not kept

  bool operator==(const SecretRecord&) const = default;
};

// Output of the per-layer expansion pass: same evaluation semantics as the
// source model, but every conv/dwconv/pwconv runs on transformed weights and
// is bracketed by restore ops (and mask push/pop where masking applies).
struct ConvertedModel {
  ModelGraph graph;
  std::vector<MaskSlot> mask_slots;
  std::vector<SecretRecord> secrets;
  ObfuscationParams params;
};

// One collapsed secure region.  Nodes use local ids; negative inputs are
// region inputs: -1-k means "region input k".
struct SecureSubgraph {
  int id = 0;
  bool merge = false;  // true when the region has 2+ inputs (tee_merge)
  std::string name;
  std::vector<Shape> input_shapes;
  std::vector<LayerSpec> nodes;
  int output = -1;  // local node id producing the region output
  Shape out_shape;

  bool operator==(const SecureSubgraph&) const = default;
};

// Output of the collapse pass: outsourced layers stay in the graph, every
// maximal run of secure ops becomes a single placeholder node backed by a
// program in `programs` (placeholder node name "tee{id}").
struct CollapsedModel {
  ModelGraph graph;  // weight store holds both halves until split_model
  std::vector<SecureSubgraph> programs;
  std::vector<MaskSlot> mask_slots;
  std::vector<SecretRecord> secrets;
  ObfuscationParams params;
};

// Deployment halves.  PartA is what the untrusted runner sees: transformed
// weights and opaque placeholders, nothing else.  PartB holds the programs,
// their tensors, the mask slots and the raw secrets.
struct PartA {
  ModelGraph graph;
};

struct PartB {
  Shape input_shape;
  std::vector<SecureSubgraph> programs;
  std::vector<TensorF> tensors;  // weight store referenced by program nodes
  std::vector<MaskSlot> mask_slots;
  std::vector<SecretRecord> secrets;
  double ratio = 0.0;
  uint64_t seed = 0;
};

// Per-layer expansion.  Mask brackets are added to every outsourced layer
// that has an outsourced ancestor; the first outsourced layer on each path
// sees raw input by design and gets none.
ConvertedModel convert_step1(const ModelGraph& g, const ObfuscationParams& p);

// Collapse secure runs between outsourced layers into placeholder nodes.
CollapsedModel convert_step2(const ConvertedModel& cm);

// Split a collapsed model into the two deployment halves.
void split_model(const CollapsedModel& cm, PartA& a, PartB& b);

// Reference evaluation of one secure program against a weight store.
TensorF eval_program(const SecureSubgraph& sg, const std::vector<TensorF>& store,
                     const std::vector<const TensorF*>& region_inputs,
                     const MaskState* masks);

// Reference evaluation of a collapsed model (expands placeholders in place;
// the memory-bounded path lives in the runtime module).
TensorF eval_collapsed(const CollapsedModel& cm, const TensorF& x,
                       const MaskState* masks);

ConvSecret<float> gen_layer_conv_secret(const ObfuscationParams& p, int node_id,
                                        const Shape& wshape);
DwSecret<float> gen_layer_dw_secret(const ObfuscationParams& p, int node_id,
                                    int channels);

}  // namespace shadownet
