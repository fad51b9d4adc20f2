#include "shadownet/runtime.hpp"

#include <algorithm>
#include <cstring>

#include "shadownet/models.hpp"

namespace shadownet {

namespace {

bool ends_with(const std::string& s, const char* suffix) {
  const size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

bool inplace_kind(LayerKind k) {
  switch (k) {
    case LayerKind::batchnorm:
    case LayerKind::relu6:
    case LayerKind::softmax:
    case LayerKind::linear_transform:
    case LayerKind::shuffle_channel:
    case LayerKind::push_mask:
    case LayerKind::pop_mask:
      return true;
    default:
      return false;
  }
}

}  // namespace

void SecureExecutor::compile_program(const SecureSubgraph& sg, Program& p) {
  const std::string where = "program '" + sg.name + "': ";
  if (sg.input_shapes.empty() || sg.input_shapes.size() > 2)
    throw InvalidParams(where + "executor supports 1 or 2 region inputs, got " +
                        std::to_string(sg.input_shapes.size()));
  if (sg.nodes.empty() || sg.output < 0 || sg.output >= int(sg.nodes.size()))
    throw InvalidParams(where + "bad node list");

  // Value ids: -1-k for region input k, node index otherwise.
  std::map<int, int> consumers;
  for (const LayerSpec& n : sg.nodes)
    for (int in : n.inputs) consumers[in]++;
  consumers[sg.output]++;  // stays live to the end

  std::map<int, Shape> shape_of;
  for (size_t k = 0; k < sg.input_shapes.size(); ++k) {
    const Shape& s = sg.input_shapes[k];
    if (s.rank != 3) throw InvalidParams(where + "region inputs must be rank 3");
    shape_of[-1 - int(k)] = s;
    p.input_buffers.push_back(int(k));
    p.input_counts.push_back(s.count());
  }
  p.input_shapes = sg.input_shapes;
  p.merge = sg.merge;

  auto tensor_ptr = [&](int id, const char* what) -> const TensorF& {
    if (id < 0 || size_t(id) >= b_.tensors.size())
      throw InvalidParams(where + std::string(what) + " tensor id out of range");
    return b_.tensors[size_t(id)];
  };

  std::map<int, int> bufof;  // live value -> buffer
  for (size_t k = 0; k < sg.input_shapes.size(); ++k) bufof[-1 - int(k)] = int(k);

  for (size_t j = 0; j < sg.nodes.size(); ++j) {
    const LayerSpec& n = sg.nodes[j];
    const int v0 = n.inputs.at(0);
    const Shape in0 = shape_of.at(v0);
    Step s;
    s.kind = n.kind;
    s.h = in0.h();
    s.w = in0.w();
    s.c = in0.c();
    s.in_count = in0.count();
    Shape out = in0;

    switch (n.kind) {
      case LayerKind::batchnorm: {
        const TensorF& g = tensor_ptr(n.gamma, "gamma");
        const TensorF& be = tensor_ptr(n.beta, "beta");
        const TensorF& mu = tensor_ptr(n.mean, "mean");
        const TensorF& va = tensor_ptr(n.variance, "variance");
        if (int(g.count()) != s.c || int(be.count()) != s.c ||
            int(mu.count()) != s.c || int(va.count()) != s.c)
          throw ShapeError(where + "node '" + n.name +
                           "': parameter length != channel count");
        s.gamma = g.v.data();
        s.beta = be.v.data();
        s.mean = mu.v.data();
        s.variance = va.v.data();
        s.eps = n.epsilon;
        break;
      }
      case LayerKind::relu6:
      case LayerKind::softmax:
        break;
      case LayerKind::linear_transform: {
        const TensorF& f = tensor_ptr(n.weights, "kernel");
        if (f.shape.rank != 4 || f.shape.kh() != 1 || f.shape.kw() != 1 ||
            f.shape.cin() != s.c)
          throw ShapeError(where + "node '" + n.name + "': filter " +
                           f.shape.str() + " does not fit input " + in0.str());
        if (f.shape.n() > f.shape.cin())
          throw InvalidParams(where + "node '" + n.name +
                              "': in-place mix needs n <= cin");
        s.filt = f.v.data();
        s.out_c = f.shape.n();
        out = Shape::hwc(s.h, s.w, s.out_c);
        break;
      }
      case LayerKind::shuffle_channel: {
        if (int(n.perm.size()) != s.c)
          throw ShapeError(where + "node '" + n.name +
                           "': permutation length != channel count");
        s.perm = n.perm.data();
        if (n.scale >= 0) {
          const TensorF& sc = tensor_ptr(n.scale, "scale");
          if (int(sc.count()) != s.c)
            throw ShapeError(where + "node '" + n.name +
                             "': scale length != channel count");
          s.scale = sc.v.data();
        }
        break;
      }
      case LayerKind::push_mask:
      case LayerKind::pop_mask: {
        if (n.mask_slot < 0 || size_t(n.mask_slot) >= b_.mask_slots.size())
          throw InvalidParams(where + "node '" + n.name +
                              "': mask slot out of range");
        const MaskSlot& slot = b_.mask_slots[size_t(n.mask_slot)];
        const Shape& want =
            n.kind == LayerKind::push_mask ? slot.shape : slot.u_shape;
        if (want != in0)
          throw ShapeError(where + "node '" + n.name + "': mask shape " +
                           want.str() + " != activation " + in0.str());
        s.mask_slot = n.mask_slot;
        p.uses_masks = true;
        break;
      }
      case LayerKind::avgpool:
      case LayerKind::maxpool: {
        s.window = n.window;
        s.stride = n.stride;
        const int oh = conv_out_dim(s.h, n.window, n.stride, Padding::valid, "height");
        const int ow = conv_out_dim(s.w, n.window, n.stride, Padding::valid, "width");
        out = Shape::hwc(oh, ow, s.c);
        break;
      }
      case LayerKind::add: {
        const Shape in1 = shape_of.at(n.inputs.at(1));
        if (in1 != in0)
          throw ShapeError(where + "node '" + n.name + "': addend shapes " +
                           in0.str() + " vs " + in1.str());
        break;
      }
      default:
        throw InvalidParams(where + "node '" + n.name +
                            "' has kind '" + kind_name(n.kind) +
                            "', which cannot run in the secure world");
    }

    // Buffer scheduling. In-place kinds keep their input's buffer; pools flip
    // to the free buffer; add accumulates into its first input.
    if (inplace_kind(n.kind)) {
      if (consumers.at(v0) != 1)
        throw InvalidParams(where + "node '" + n.name +
                            "': input is still needed elsewhere; cannot run "
                            "in place");
      const int b = bufof.at(v0);
      bufof.erase(v0);
      consumers.erase(v0);
      s.src = s.dst = b;
      bufof[int(j)] = b;
    } else if (n.kind == LayerKind::avgpool || n.kind == LayerKind::maxpool) {
      const int b = bufof.at(v0);
      for (const auto& [val, vb] : bufof)
        if (val != v0 && vb == 1 - b)
          throw InvalidParams(where + "node '" + n.name +
                              "': both buffers live, no room for the pool "
                              "output");
      s.src = b;
      s.dst = 1 - b;
      if (--consumers.at(v0) == 0) {
        bufof.erase(v0);
        consumers.erase(v0);
      }
      bufof[int(j)] = s.dst;
    } else {  // add
      const int v1 = n.inputs.at(1);
      if (consumers.at(v0) != 1)
        throw InvalidParams(where + "node '" + n.name +
                            "': first addend is still needed elsewhere");
      s.src = s.dst = bufof.at(v0);
      s.src1 = bufof.at(v1);
      bufof.erase(v0);
      consumers.erase(v0);
      if (--consumers.at(v1) == 0) {
        bufof.erase(v1);
        consumers.erase(v1);
      }
      bufof[int(j)] = s.dst;
    }

    s.out_count = out.count();
    shape_of[int(j)] = out;

    if (ends_with(n.name, ".pop") || ends_with(n.name, ".restore") ||
        ends_with(n.name, ".shuffle_out")) {
      TensorF& t = taps_[n.name];
      if (t.shape != out) t = TensorF(out);
      s.tap = t.v.data();
    }
    p.steps.push_back(s);
  }

  p.out_buffer = bufof.at(sg.output);
  p.out_count = shape_of.at(sg.output).count();
  p.out_shape = shape_of.at(sg.output);
  if (p.out_shape != sg.out_shape)
    throw ShapeError(where + "declared output shape " + sg.out_shape.str() +
                     " != computed " + p.out_shape.str());
}

void SecureExecutor::load_part_b(PartB b, size_t budget_bytes) {
  teardown();
  if (b.input_shape.rank != 3)
    throw InvalidParams("load: part B input shape must be rank 3");
  b_ = std::move(b);

  taps_.clear();
  programs_.clear();
  programs_.resize(b_.programs.size());
  for (size_t i = 0; i < b_.programs.size(); ++i) {
    if (b_.programs[i].id != int(i))
      throw InvalidParams("load: program ids must be dense and ordered");
    compile_program(b_.programs[i], programs_[i]);
  }

  size_t max_act = 0;
  int max_tmp_c = 0;
  for (const Program& p : programs_) {
    for (size_t c : p.input_counts) max_act = std::max(max_act, c);
    for (const Step& s : p.steps) {
      max_act = std::max({max_act, s.in_count, s.out_count});
      // The pointwise/shuffle scratch holds one input pixel.
      if (s.kind == LayerKind::linear_transform ||
          s.kind == LayerKind::shuffle_channel)
        max_tmp_c = std::max(max_tmp_c, s.c);
    }
  }
  buffers_[0].assign(max_act, 0.f);
  buffers_[1].assign(max_act, 0.f);
  pixel_tmp_.assign(size_t(std::max(max_tmp_c, 1)), 0.f);

  state_.round = 0;
  state_.m.clear();
  state_.u.clear();
  stash_u_.clear();
  for (const MaskSlot& slot : b_.mask_slots) {
    if (slot.orig_weights < 0 || size_t(slot.orig_weights) >= b_.tensors.size())
      throw InvalidParams("load: mask slot '" + slot.layer +
                          "' has no original kernel");
    state_.m.emplace_back(slot.shape);
    state_.u.emplace_back(slot.u_shape);
    stash_u_.emplace_back(slot.u_shape);
  }

  stats_ = MemoryStats{};
  for (const TensorF& t : b_.tensors) stats_.tensor_bytes += t.count() * sizeof(float);
  for (const TensorF& t : state_.m) stats_.tensor_bytes += t.count() * sizeof(float);
  for (const TensorF& t : state_.u) stats_.tensor_bytes += t.count() * sizeof(float);
  stats_.activation_bytes = 2 * max_act * sizeof(float);
  stats_.max_act_floats = max_act;
  for (const auto& kv : taps_) stats_.tap_bytes += kv.second.count() * sizeof(float);

  if (stats_.footprint() > budget_bytes)
    throw BudgetError("secure footprint " + std::to_string(stats_.footprint()) +
                      " bytes exceeds budget " + std::to_string(budget_bytes));
  loaded_ = true;
}

void SecureExecutor::reload_masks(uint64_t seed, uint64_t round) {
  if (!loaded_) throw InvalidParams("reload_masks: nothing loaded");
  const bool keep_stale = stale_unmask_ && have_masks_;
  if (keep_stale)
    for (size_t i = 0; i < state_.u.size(); ++i)
      std::memcpy(stash_u_[i].v.data(), state_.u[i].v.data(),
                  state_.u[i].count() * sizeof(float));
  regenerate_masks_inplace(b_.mask_slots, b_.tensors, seed, round, state_);
  if (keep_stale)
    for (size_t i = 0; i < state_.u.size(); ++i)
      std::memcpy(state_.u[i].v.data(), stash_u_[i].v.data(),
                  state_.u[i].count() * sizeof(float));
  have_masks_ = true;
  round_ = round;
}

void SecureExecutor::run_shadow(int program, const TensorF& in, TensorF& out) {
  if (!loaded_) throw InvalidParams("run: nothing loaded");
  if (program < 0 || size_t(program) >= programs_.size())
    throw InvalidParams("run: program id out of range");
  if (programs_[size_t(program)].merge)
    throw InvalidParams("run: program " + std::to_string(program) +
                        " is a merge; use run_merge");
  const TensorF* one = &in;
  run_program(program, &one, 1, out);
}

void SecureExecutor::run_merge(int program, const TensorF* const* ins,
                               size_t count, TensorF& out) {
  if (!loaded_) throw InvalidParams("run: nothing loaded");
  if (program < 0 || size_t(program) >= programs_.size())
    throw InvalidParams("run: program id out of range");
  if (!programs_[size_t(program)].merge)
    throw InvalidParams("run: program " + std::to_string(program) +
                        " is not a merge; use run_shadow");
  run_program(program, ins, count, out);
}

void SecureExecutor::run_program(int program, const TensorF* const* ins,
                                 size_t count, TensorF& out) {
  Program& p = programs_[size_t(program)];
  if (count != p.input_shapes.size())
    throw InvalidParams("run: program " + std::to_string(program) +
                        " expects " + std::to_string(p.input_shapes.size()) +
                        " inputs, got " + std::to_string(count));
  if (p.uses_masks && !have_masks_)
    throw InvalidParams("run: reload_masks must precede a masked program");
  for (size_t k = 0; k < count; ++k) {
    if (ins[k]->shape != p.input_shapes[k])
      throw ShapeError("run: input " + std::to_string(k) + " shape " +
                       ins[k]->shape.str() + " != " + p.input_shapes[k].str());
    std::memcpy(buf(p.input_buffers[k]), ins[k]->v.data(),
                p.input_counts[k] * sizeof(float));
  }

  for (const Step& s : p.steps) {
    switch (s.kind) {
      case LayerKind::batchnorm:
        ops::span::batchnorm(buf(s.src), s.h * s.w, s.c, s.gamma, s.beta,
                             s.mean, s.variance, s.eps);
        break;
      case LayerKind::relu6:
        ops::span::relu6(buf(s.src), s.in_count);
        break;
      case LayerKind::softmax:
        ops::span::softmax(buf(s.src), s.in_count);
        break;
      case LayerKind::linear_transform:
        ops::span::pointwise(buf(s.src), s.h * s.w, s.c, s.filt, s.out_c,
                             buf(s.src), pixel_tmp_.data());
        break;
      case LayerKind::shuffle_channel:
        ops::span::shuffle(buf(s.src), s.h * s.w, s.c, s.perm, s.scale,
                           pixel_tmp_.data());
        break;
      case LayerKind::push_mask:
        ops::span::axpy_mask(buf(s.src), state_.m[size_t(s.mask_slot)].v.data(),
                             s.in_count, 1.0f);
        break;
      case LayerKind::pop_mask:
        ops::span::axpy_mask(buf(s.src), state_.u[size_t(s.mask_slot)].v.data(),
                             s.in_count, -1.0f);
        break;
      case LayerKind::avgpool:
        ops::span::avg_pool(buf(s.src), s.h, s.w, s.c, s.window, s.stride,
                            buf(s.dst));
        break;
      case LayerKind::maxpool:
        ops::span::max_pool(buf(s.src), s.h, s.w, s.c, s.window, s.stride,
                            buf(s.dst));
        break;
      case LayerKind::add:
        ops::span::add(buf(s.dst), buf(s.src1), s.in_count);
        break;
      default:
        throw InvalidParams("run: invalid compiled step");
    }
    if (s.tap)
      std::memcpy(s.tap, buf(s.dst), s.out_count * sizeof(float));
  }

  if (out.shape != p.out_shape)
    throw ShapeError("run: output buffer shape " + out.shape.str() + " != " +
                     p.out_shape.str());
  std::memcpy(out.v.data(), buf(p.out_buffer), p.out_count * sizeof(float));
}

void SecureExecutor::teardown() {
  // Scrub secret material before release.
  for (TensorF& t : b_.tensors) std::fill(t.v.begin(), t.v.end(), 0.f);
  for (SecretRecord& r : b_.secrets) {
    if (r.conv) {
      std::fill(r.conv->lambdas.begin(), r.conv->lambdas.end(), 0.0);
      std::fill(r.conv->filler.v.begin(), r.conv->filler.v.end(), 0.f);
    }
    if (r.dw) std::fill(r.dw->lambdas.begin(), r.dw->lambdas.end(), 0.0);
  }
  for (TensorF& t : state_.m) std::fill(t.v.begin(), t.v.end(), 0.f);
  for (TensorF& t : state_.u) std::fill(t.v.begin(), t.v.end(), 0.f);
  b_ = PartB{};
  programs_.clear();
  state_ = MaskState{};
  stash_u_.clear();
  buffers_[0].clear();
  buffers_[1].clear();
  pixel_tmp_.clear();
  taps_.clear();
  stats_ = MemoryStats{};
  loaded_ = false;
  have_masks_ = false;
  round_ = 0;
}

void Session::init(PartA a, PartB b, size_t budget_bytes) {
  a.graph.validate();
  shapes_ = a.graph.infer_shapes();

  masked_.clear();
  for (const MaskSlot& s : b.mask_slots) masked_.insert(s.layer);

  struct ProgMeta {
    size_t arity;
    Shape out;
  };
  std::vector<ProgMeta> meta;
  for (const SecureSubgraph& sg : b.programs)
    meta.push_back({sg.input_shapes.size(), sg.out_shape});

  int max_pw = 1;
  for (size_t i = 0; i < a.graph.nodes.size(); ++i) {
    const LayerSpec& n = a.graph.nodes[i];
    switch (n.kind) {
      case LayerKind::conv:
      case LayerKind::dwconv:
        break;
      case LayerKind::pwconv:
        // Scratch holds one input pixel, flattened input included.
        max_pw =
            std::max(max_pw, a.graph.weights[size_t(n.weights)].shape.cin());
        break;
      case LayerKind::tee_shadow:
      case LayerKind::tee_merge: {
        if (n.placeholder < 0 || size_t(n.placeholder) >= meta.size())
          throw InvalidParams("init: node '" + n.name +
                              "' references a missing program");
        const ProgMeta& m = meta[size_t(n.placeholder)];
        if (m.arity != n.inputs.size())
          throw InvalidParams("init: node '" + n.name +
                              "' arity does not match its program");
        if (m.out != shapes_[i])
          throw InvalidParams("init: node '" + n.name +
                              "' output shape does not match its program");
        break;
      }
      default:
        throw InvalidParams("init: part A carries secure-side node '" +
                            n.name + "' (" + kind_name(n.kind) + ")");
    }
  }

  exec_.load_part_b(std::move(b), budget_bytes);
  a_ = std::move(a);
  vals_.clear();
  for (const Shape& s : shapes_) vals_.emplace_back(s);
  pixel_tmp_.assign(size_t(max_pw), 0.f);
  initialized_ = true;
  round_active_ = false;
  rounds_ = 0;
}

void Session::round_begin(uint64_t mask_seed, uint64_t round) {
  if (!initialized_) throw InvalidParams("round_begin: session not initialized");
  exec_.reload_masks(mask_seed, round);
  round_active_ = true;
  ++rounds_;
}

const TensorF& Session::infer(const TensorF& x, AdversaryView* view) {
  if (!initialized_) throw InvalidParams("infer: session not initialized");
  if (!round_active_)
    throw InvalidParams("infer: no active round; call round_begin first");
  if (x.shape != a_.graph.input_shape)
    throw ShapeError("infer: input shape " + x.shape.str() +
                     " != model input " + a_.graph.input_shape.str());

  int seq = 0;
  auto val = [&](int id) -> const TensorF& {
    return id < 0 ? x : vals_[size_t(id)];
  };

  for (size_t i = 0; i < a_.graph.nodes.size(); ++i) {
    const LayerSpec& n = a_.graph.nodes[i];
    const TensorF& in0 = val(n.inputs[0]);
    switch (n.kind) {
      case LayerKind::conv: {
        if (view)
          view->records.push_back(
              {seq++, n.name, masked_.count(n.name) > 0, in0});
        const TensorF& w = a_.graph.weights[size_t(n.weights)];
        ops::span::conv2d(in0.v.data(), in0.shape.h(), in0.shape.w(),
                          in0.shape.c(), w.v.data(), w.shape.kh(),
                          w.shape.kw(), w.shape.n(), n.stride, n.padding,
                          vals_[i].v.data());
        break;
      }
      case LayerKind::dwconv: {
        if (view)
          view->records.push_back(
              {seq++, n.name, masked_.count(n.name) > 0, in0});
        const TensorF& w = a_.graph.weights[size_t(n.weights)];
        ops::span::dwconv2d(in0.v.data(), in0.shape.h(), in0.shape.w(),
                            in0.shape.c(), w.v.data(), w.shape.kh(),
                            w.shape.kw(), n.stride, n.padding,
                            vals_[i].v.data());
        break;
      }
      case LayerKind::pwconv: {
        if (view)
          view->records.push_back(
              {seq++, n.name, masked_.count(n.name) > 0, in0});
        const TensorF& w = a_.graph.weights[size_t(n.weights)];
        const int pixels =
            n.flatten_input ? 1 : in0.shape.h() * in0.shape.w();
        const int cin = n.flatten_input ? int(in0.count()) : in0.shape.c();
        ops::span::pointwise(in0.v.data(), pixels, cin, w.v.data(),
                             w.shape.n(), vals_[i].v.data(),
                             pixel_tmp_.data());
        break;
      }
      case LayerKind::tee_shadow:
        exec_.run_shadow(n.placeholder, in0, vals_[i]);
        break;
      case LayerKind::tee_merge: {
        const TensorF* two[2] = {&in0, &val(n.inputs[1])};
        exec_.run_merge(n.placeholder, two, 2, vals_[i]);
        break;
      }
      default:
        throw InvalidParams("infer: unexpected node kind in part A");
    }
  }

  const TensorF& y = vals_[size_t(a_.graph.output)];
  if (view) {
    view->input = x;
    view->output = y;
    for (size_t i = 0; i < a_.graph.nodes.size(); ++i) {
      const LayerSpec& n = a_.graph.nodes[i];
      if (is_outsourced_kind(n.kind))
        view->weights.emplace_back(n.name,
                                   a_.graph.weights[size_t(n.weights)]);
    }
  }
  return y;
}

VerifyReport verify_model(const ModelGraph& original, const PartA& a,
                          const PartB& b, const VerifyOptions& opt) {
  if (opt.trials < 1) throw InvalidParams("verify: trials must be >= 1");

  Session session;
  session.init(a, b, opt.budget_bytes);
  session.secure().set_stale_unmask(opt.stale_unmask);

  VerifyReport rep;
  Rng rng(opt.seed, 0xec);
  for (int t = 0; t < opt.trials; ++t) {
    Rng trial = rng.split(uint64_t(t));
    const TensorF x = models::random_activation(original.input_shape, trial);
    const std::vector<TensorF> ref = eval_all(original, x);

    session.round_begin(rng.next_u64(), uint64_t(t));
    const TensorF& y = session.infer(x);
    const double eta = rel_error(y, ref[size_t(original.output)]);
    rep.trials = t + 1;
    rep.max_eta = std::max(rep.max_eta, eta);
    if (eta <= opt.tolerance) continue;

    rep.ok = false;
    const auto& taps = session.secure().taps();
    for (size_t j = 0; j < original.nodes.size(); ++j) {
      const LayerSpec& n = original.nodes[j];
      if (!is_outsourced_kind(n.kind)) continue;
      std::string tap_name;
      if (session.masked_layers().count(n.name))
        tap_name = n.name + ".pop";
      else if (n.kind == LayerKind::dwconv)
        tap_name = n.name + ".shuffle_out";
      else
        tap_name = n.name + ".restore";
      const auto it = taps.find(tap_name);
      if (it == taps.end()) continue;  // restored value never left part A
      const double layer_eta = rel_error(it->second, ref[j]);
      if (layer_eta > opt.tolerance) {
        rep.first_bad_layer = n.name;
        rep.bad_eta = layer_eta;
        break;
      }
    }
    if (rep.first_bad_layer.empty()) {
      rep.first_bad_layer = "output";
      rep.bad_eta = eta;
    }
    break;
  }
  return rep;
}

namespace sabotage {

namespace {

// All program nodes named `name` (shared prefixes are duplicated across
// programs, so there can be several copies).
std::vector<LayerSpec*> find_nodes(PartB& b, const std::string& name) {
  std::vector<LayerSpec*> out;
  for (SecureSubgraph& sg : b.programs)
    for (LayerSpec& n : sg.nodes)
      if (n.name == name) out.push_back(&n);
  return out;
}

}  // namespace

void flip_restore_scale(PartB& b, const std::string& layer) {
  auto restores = find_nodes(b, layer + ".restore");
  if (!restores.empty()) {
    std::set<int> done;
    for (LayerSpec* n : restores) {
      if (!done.insert(n->weights).second) continue;
      TensorF& t = b.tensors[size_t(n->weights)];
      for (float& v : t.v)
        if (v != 0.f) {
          v *= 2.f;
          break;
        }
    }
    return;
  }
  auto shuffles = find_nodes(b, layer + ".shuffle_in");
  if (!shuffles.empty()) {
    std::set<int> done;
    for (LayerSpec* n : shuffles) {
      if (n->scale < 0 || !done.insert(n->scale).second) continue;
      TensorF& t = b.tensors[size_t(n->scale)];
      for (float& v : t.v)
        if (v != 0.f) {
          v *= 2.f;
          break;
        }
    }
    return;
  }
  throw InvalidParams("sabotage: no restore stage for layer '" + layer + "'");
}

void swap_restore_rows(PartB& b, const std::string& layer) {
  auto restores = find_nodes(b, layer + ".restore");
  if (!restores.empty()) {
    std::set<int> done;
    for (LayerSpec* nd : restores) {
      if (!done.insert(nd->weights).second) continue;
      TensorF& t = b.tensors[size_t(nd->weights)];
      const int m = t.shape.cin(), n = t.shape.n();
      int r0 = -1, r1 = -1;
      for (int r = 0; r < m && r1 < 0; ++r) {
        bool active = false;
        for (int k = 0; k < n; ++k)
          if (t.v[size_t(r * n + k)] != 0.f) active = true;
        if (!active) continue;
        (r0 < 0 ? r0 : r1) = r;
      }
      if (r1 < 0)
        throw InvalidParams("sabotage: restore filter for '" + layer +
                            "' has fewer than two active rows");
      for (int k = 0; k < n; ++k)
        std::swap(t.v[size_t(r0 * n + k)], t.v[size_t(r1 * n + k)]);
    }
    return;
  }
  auto shuffles = find_nodes(b, layer + ".shuffle_out");
  if (!shuffles.empty()) {
    for (LayerSpec* nd : shuffles) {
      if (nd->perm.size() < 2)
        throw InvalidParams("sabotage: layer '" + layer +
                            "' has fewer than two channels");
      std::swap(nd->perm[0], nd->perm[1]);
    }
    return;
  }
  throw InvalidParams("sabotage: no restore stage for layer '" + layer + "'");
}

}  // namespace sabotage

}  // namespace shadownet
