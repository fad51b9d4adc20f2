#include "shadownet/masking.hpp"

#include "shadownet/error.hpp"

namespace shadownet {

bool MaskSlot::operator==(const MaskSlot& o) const {
  return layer == o.layer && shape == o.shape && scale == o.scale &&
         op == o.op && stride == o.stride && padding == o.padding &&
         flatten_input == o.flatten_input && orig_weights == o.orig_weights &&
         u_shape == o.u_shape;
}

namespace {

void fill_and_unmask(const MaskSlot& slot, int slot_idx,
                     const std::vector<TensorF>& tensors, uint64_t seed,
                     uint64_t round, TensorF& m, TensorF& u) {
  Rng rng = Rng(seed, round).split(uint64_t(slot_idx));
  for (auto& e : m.v) e = float(rng.uniform(-slot.scale, slot.scale));
  if (slot.orig_weights < 0 || slot.orig_weights >= int(tensors.size()))
    throw InvalidParams("mask slot '" + slot.layer +
                        "': missing original weights");
  const TensorF& w = tensors[size_t(slot.orig_weights)];
  switch (slot.op) {
    case LayerKind::conv:
    case LayerKind::pwconv: {
      const int h = slot.flatten_input ? 1 : slot.shape.h();
      const int ww = slot.flatten_input ? 1 : slot.shape.w();
      const int cin = slot.flatten_input ? int(slot.shape.count()) : slot.shape.c();
      ops::span::conv2d(m.v.data(), h, ww, cin, w.v.data(), w.shape.kh(),
                        w.shape.kw(), w.shape.n(), slot.stride, slot.padding,
                        u.v.data());
      break;
    }
    case LayerKind::dwconv:
      ops::span::dwconv2d(m.v.data(), slot.shape.h(), slot.shape.w(),
                          slot.shape.c(), w.v.data(), w.shape.h(), w.shape.w(),
                          slot.stride, slot.padding, u.v.data());
      break;
    default:
      throw InvalidParams("mask slot '" + slot.layer +
                          "': unsupported operator");
  }
}

}  // namespace

MaskState generate_round_masks(const std::vector<MaskSlot>& slots,
                               const std::vector<TensorF>& tensors,
                               uint64_t seed, uint64_t round) {
  MaskState st;
  st.round = round;
  st.m.reserve(slots.size());
  st.u.reserve(slots.size());
  for (size_t i = 0; i < slots.size(); ++i) {
    st.m.emplace_back(slots[i].shape);
    st.u.emplace_back(slots[i].u_shape);
  }
  regenerate_masks_inplace(slots, tensors, seed, round, st);
  return st;
}

void regenerate_masks_inplace(const std::vector<MaskSlot>& slots,
                              const std::vector<TensorF>& tensors,
                              uint64_t seed, uint64_t round, MaskState& state) {
  if (state.m.size() != slots.size() || state.u.size() != slots.size())
    throw InvalidParams("mask state does not match slot list");
  state.round = round;
  for (size_t i = 0; i < slots.size(); ++i) {
    if (state.m[i].shape != slots[i].shape ||
        state.u[i].shape != slots[i].u_shape)
      throw ShapeError("mask state buffers do not match slot '" +
                       slots[i].layer + "'");
    fill_and_unmask(slots[i], int(i), tensors, seed, round, state.m[i],
                    state.u[i]);
  }
}

}  // namespace shadownet
