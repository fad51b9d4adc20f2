#pragma once

#include <string>
#include <vector>

#include "shadownet/ops.hpp"
#include "shadownet/tensor.hpp"

namespace shadownet {

struct MaskState;

enum class LayerKind {
  conv,
  dwconv,
  pwconv,
  batchnorm,
  relu6,
  avgpool,
  maxpool,
  softmax,
  add,
  // inserted by conversion
  linear_transform,
  shuffle_channel,
  push_mask,
  pop_mask,
  // placeholders for secure sub-sequences
  tee_shadow,
  tee_merge,
};

const char* kind_name(LayerKind k);
LayerKind kind_from_name(const std::string& name);

// True for the layer kinds whose weights are outsourced after transformation.
bool is_outsourced_kind(LayerKind k);

// One node of the DAG. `inputs` holds producer node ids; -1 is the model
// input. Only the fields relevant to `kind` are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::relu6;
  std::string name;
  std::vector<int> inputs;

  int stride = 1;
  Padding padding = Padding::valid;
  int window = 0;              // pools
  bool flatten_input = false;  // pwconv acting as a dense layer
  float epsilon = 1e-3f;       // batchnorm

  int weights = -1;  // conv kernel / restore filter tensor id
  int gamma = -1, beta = -1, mean = -1, variance = -1;  // batchnorm tensor ids

  int mask_slot = -1;          // push_mask / pop_mask
  std::vector<int> perm;       // shuffle_channel scatter: out[perm[i]] = in[i]
  int scale = -1;              // shuffle_channel per-channel scale tensor id
  int placeholder = -1;        // tee_shadow / tee_merge program id
  Shape out_shape;             // placeholder output shape

  bool operator==(const LayerSpec& o) const;
};

struct ModelGraph {
  Shape input_shape;
  std::vector<LayerSpec> nodes;
  std::vector<TensorF> weights;
  int output = -1;

  int add_weight(TensorF t);
  int add_node(LayerSpec n);  // returns node id; inputs must precede it

  // Convenience builders; each returns the new node id.
  int conv(const std::string& name, int input, TensorF kernel, int stride,
           Padding padding);
  int pwconv(const std::string& name, int input, TensorF kernel);
  int dense(const std::string& name, int input, TensorF kernel);  // flattening pwconv
  int dwconv(const std::string& name, int input, TensorF kernel, int stride,
             Padding padding);
  int batchnorm(const std::string& name, int input, TensorF gamma, TensorF beta,
                TensorF mean, TensorF variance, float eps = 1e-3f);
  int relu6(const std::string& name, int input);
  int avgpool(const std::string& name, int input, int window, int stride);
  int maxpool(const std::string& name, int input, int window, int stride);
  int softmax(const std::string& name, int input);
  int add(const std::string& name, int a, int b);

  int find_node(const std::string& name) const;  // -1 if absent

  // Structural validation: topological ids, weight refs in range, unique
  // names, output set. Throws InvalidParams.
  void validate() const;

  // Per-node output shapes; throws ShapeError on inconsistency. Placeholder
  // nodes use their recorded out_shape.
  std::vector<Shape> infer_shapes() const;

  bool operator==(const ModelGraph& o) const;
};

// Evaluates one node given its input tensors and a weight store. Placeholder
// kinds cannot be evaluated here; push/pop kinds require a mask state.
TensorF eval_layer(const LayerSpec& n, const std::vector<const TensorF*>& ins,
                   const std::vector<TensorF>& weights,
                   const MaskState* masks = nullptr);

// Evaluates every node; masks are required iff the graph contains
// push_mask/pop_mask nodes. Placeholder kinds cannot be evaluated here.
std::vector<TensorF> eval_all(const ModelGraph& g, const TensorF& x,
                              const MaskState* masks = nullptr);

// Output-node value only.
TensorF eval_graph(const ModelGraph& g, const TensorF& x,
                   const MaskState* masks = nullptr);

}  // namespace shadownet
