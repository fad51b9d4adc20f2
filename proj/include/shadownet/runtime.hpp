#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "shadownet/convert.hpp"
#include "shadownet/masking.hpp"

namespace shadownet {

// Secure-world command protocol. The normal world drives the executor only
// through these commands; nothing else crosses the boundary.
enum class Command {
  load_part_b,
  reload_masks,
  run_shadow,
  run_merge,
  teardown,
};

struct MemoryStats {
  size_t tensor_bytes = 0;      // part B tensors plus mask/unmask store
  size_t activation_bytes = 0;  // the two rotating buffers
  size_t tap_bytes = 0;         // restored-output debug taps
  size_t max_act_floats = 0;    // capacity of one rotating buffer

  // Secure working set counted against the load budget.
  size_t footprint() const { return tensor_bytes + activation_bytes; }
};

// TEE-style program executor. load_part_b preallocates every byte the run
// commands will ever touch: part B tensors, the mask/unmask store, two
// rotating activation buffers and the per-layer taps. reload_masks and the
// run commands never allocate; programs execute in place on the two buffers
// (pools flip to the free buffer, merges accumulate into the first).
class SecureExecutor {
 public:
  void load_part_b(PartB b, size_t budget_bytes);
  void reload_masks(uint64_t seed, uint64_t round);
  void run_shadow(int program, const TensorF& in, TensorF& out);
  void run_merge(int program, const TensorF* const* ins, size_t count,
                 TensorF& out);
  void teardown();

  bool loaded() const { return loaded_; }
  uint64_t round() const { return round_; }
  const MemoryStats& stats() const { return stats_; }

  // Clean restored activations recorded by the last run commands, keyed by
  // producing node name (layer.pop / layer.restore / layer.shuffle_out).
  const std::map<std::string, TensorF>& taps() const { return taps_; }

  // Fault injection: keep serving the previous round's unmask terms after a
  // mask reload. Masked layers then restore garbage; verification must name
  // them.
  void set_stale_unmask(bool on) { stale_unmask_ = on; }

 private:
  // Precompiled program step; all pointers resolve into storage owned by the
  // executor, fixed at load time.
  struct Step {
    LayerKind kind = LayerKind::relu6;
    int src = 0, src1 = 0, dst = 0;  // rotating buffer ids
    int h = 0, w = 0, c = 0;
    size_t in_count = 0, out_count = 0;
    int stride = 1, window = 0;
    int out_c = 0;
    float eps = 0;
    const float* filt = nullptr;  // linear_transform
    const float* gamma = nullptr;
    const float* beta = nullptr;
    const float* mean = nullptr;
    const float* variance = nullptr;
    const int* perm = nullptr;
    const float* scale = nullptr;
    int mask_slot = -1;
    float* tap = nullptr;  // copy of this step's output, when recorded
  };

  struct Program {
    std::vector<Step> steps;
    std::vector<int> input_buffers;     // region input k lives in buffer k
    std::vector<size_t> input_counts;
    std::vector<Shape> input_shapes;
    bool merge = false;
    int out_buffer = 0;
    size_t out_count = 0;
    Shape out_shape;
    bool uses_masks = false;
  };

  void compile_program(const SecureSubgraph& sg, Program& p);
  void run_program(int program, const TensorF* const* ins, size_t count,
                   TensorF& out);
  float* buf(int id) { return buffers_[size_t(id)].data(); }

  PartB b_;
  std::vector<Program> programs_;
  MaskState state_;
  std::vector<TensorF> stash_u_;
  std::array<std::vector<float>, 2> buffers_;
  std::vector<float> pixel_tmp_;
  std::map<std::string, TensorF> taps_;
  MemoryStats stats_;
  bool loaded_ = false;
  bool have_masks_ = false;
  bool stale_unmask_ = false;
  uint64_t round_ = 0;
};

// One untrusted inference boundary crossing: the input handed to an
// outsourced layer, exactly as the normal world sees it.
struct BoundaryRecord {
  int seq = 0;
  std::string layer;
  bool masked = false;
  TensorF tensor;
};

// Everything an adversary observing the normal world collects in one round.
struct AdversaryView {
  TensorF input;
  std::vector<BoundaryRecord> records;
  std::vector<std::pair<std::string, TensorF>> weights;  // transformed kernels
  TensorF output;
};

// Drives one deployed model: part A runs in the normal world on preallocated
// node storage, placeholders are forwarded to the secure executor.
class Session {
 public:
  void init(PartA a, PartB b, size_t budget_bytes);

  // Starts a mask round; required before the first infer and after any point
  // where mask freshness matters.
  void round_begin(uint64_t mask_seed, uint64_t round);

  // Returns the output node's value (owned by the session, valid until the
  // next infer). With `view` set, boundary crossings are recorded; without it
  // the call does not allocate.
  const TensorF& infer(const TensorF& x, AdversaryView* view = nullptr);

  SecureExecutor& secure() { return exec_; }
  const ModelGraph& part_a() const { return a_.graph; }
  const std::set<std::string>& masked_layers() const { return masked_; }
  uint64_t rounds_begun() const { return rounds_; }

 private:
  PartA a_;
  SecureExecutor exec_;
  std::vector<Shape> shapes_;
  std::vector<TensorF> vals_;
  std::vector<float> pixel_tmp_;
  std::set<std::string> masked_;
  bool initialized_ = false;
  bool round_active_ = false;
  uint64_t rounds_ = 0;
};

struct VerifyOptions {
  int trials = 100;
  double tolerance = 1e-4;
  size_t budget_bytes = 64ull << 20;
  uint64_t seed = 1;
  bool stale_unmask = false;
};

struct VerifyReport {
  bool ok = true;
  int trials = 0;
  double max_eta = 0;             // worst output relative error seen
  std::string first_bad_layer;    // empty when ok
  double bad_eta = 0;             // relative error at that layer
};

// Compares the deployed halves against the original model on random inputs.
// On a failing trial the report names the first outsourced layer whose
// restored output diverges ("output" if every per-layer tap is clean).
VerifyReport verify_model(const ModelGraph& original, const PartA& a,
                          const PartB& b, const VerifyOptions& opt = {});

namespace sabotage {

// Doubles one restore coefficient (conv) or one input-shuffle scale (dw):
// a wrong channel scalar.
void flip_restore_scale(PartB& b, const std::string& layer);

// Swaps two active restore-filter input rows (conv) or two output-shuffle
// targets (dw): a wrong channel permutation.
void swap_restore_rows(PartB& b, const std::string& layer);

}  // namespace sabotage

}  // namespace shadownet
