#include "shadownet/convert.hpp"

#include <map>
#include <set>
#include <string>
#include <utility>

#include "shadownet/error.hpp"

namespace shadownet {

namespace {

// Copies weight `id` from `src` into `dst` on first use; returns the new id.
int map_weight(const std::vector<TensorF>& src, ModelGraph& dst,
               std::vector<int>& wmap, int id) {
  if (id < 0) return -1;
  int& slot = wmap[size_t(id)];
  if (slot < 0) slot = dst.add_weight(src[size_t(id)]);
  return slot;
}

bool secure_node(const ModelGraph& g, int id) {
  return !is_outsourced_kind(g.nodes[size_t(id)].kind);
}

}  // namespace

ConvSecret<float> gen_layer_conv_secret(const ObfuscationParams& p, int node_id,
                                        const Shape& wshape) {
  Rng layer = Rng(p.seed).split(uint64_t(node_id));
  return gen_conv_secret<float>(wshape.n(), wshape.kh(), wshape.kw(),
                                wshape.cin(), p, layer);
}

DwSecret<float> gen_layer_dw_secret(const ObfuscationParams& p, int node_id,
                                    int channels) {
  Rng layer = Rng(p.seed).split(uint64_t(node_id));
  return gen_dw_secret<float>(channels, p, layer);
}

ConvertedModel convert_step1(const ModelGraph& g, const ObfuscationParams& p) {
  p.validate();
  g.validate();
  const std::vector<Shape> shapes = g.infer_shapes();

  // downstream[i]: some ancestor of node i is outsourced. The first outsourced
  // layer on each path sees raw input and is left unmasked; every other
  // outsourced layer gets a push/pop bracket.
  std::vector<char> downstream(g.nodes.size(), 0);
  for (size_t i = 0; i < g.nodes.size(); ++i)
    for (int in : g.nodes[i].inputs)
      if (in >= 0)
        downstream[i] |= char(downstream[size_t(in)] ||
                              is_outsourced_kind(g.nodes[size_t(in)].kind));

  ConvertedModel out;
  out.params = p;
  out.graph.input_shape = g.input_shape;
  std::vector<int> nmap(g.nodes.size(), -1);
  std::vector<int> wmap(g.weights.size(), -1);
  auto weight = [&](int id) { return map_weight(g.weights, out.graph, wmap, id); };

  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerSpec& n = g.nodes[i];
    std::vector<int> ins;
    for (int in : n.inputs) ins.push_back(in < 0 ? -1 : nmap[size_t(in)]);

    if (!is_outsourced_kind(n.kind)) {
      LayerSpec c = n;
      c.inputs = std::move(ins);
      c.weights = weight(n.weights);
      c.gamma = weight(n.gamma);
      c.beta = weight(n.beta);
      c.mean = weight(n.mean);
      c.variance = weight(n.variance);
      c.scale = weight(n.scale);
      nmap[i] = out.graph.add_node(std::move(c));
      continue;
    }

    const bool masked = downstream[i] != 0;
    int cur = ins[0];
    int slot_id = -1;

    if (masked) {
      MaskSlot slot;
      slot.layer = n.name;
      slot.shape = n.inputs[0] < 0 ? g.input_shape : shapes[size_t(n.inputs[0])];
      slot.scale = p.mask_scale;
      slot.op = n.kind;
      slot.stride = n.stride;
      slot.padding = n.padding;
      slot.flatten_input = n.flatten_input;
      slot.orig_weights = weight(n.weights);
      slot.u_shape = shapes[i];
      slot_id = int(out.mask_slots.size());
      out.mask_slots.push_back(std::move(slot));

      LayerSpec push;
      push.kind = LayerKind::push_mask;
      push.name = n.name + ".push";
      push.inputs = {cur};
      push.mask_slot = slot_id;
      cur = out.graph.add_node(std::move(push));
    }

    SecretRecord rec;
    rec.layer = n.name;
    rec.orig_weights = masked ? out.mask_slots.back().orig_weights : -1;

    if (n.kind == LayerKind::dwconv) {
      const TensorF& w = g.weights[size_t(n.weights)];
      DwSecret<float> s = gen_layer_dw_secret(p, int(i), w.shape.c());

      TensorF scales;
      scales.shape = Shape{{s.n, 0, 0, 0}, 1};
      scales.v = dw_input_scales(s);

      LayerSpec sin;
      sin.kind = LayerKind::shuffle_channel;
      sin.name = n.name + ".shuffle_in";
      sin.inputs = {cur};
      sin.perm = s.perm;
      sin.scale = out.graph.add_weight(std::move(scales));
      cur = out.graph.add_node(std::move(sin));

      LayerSpec dw = n;
      dw.inputs = {cur};
      dw.weights = out.graph.add_weight(transform_dwconv(w, s));
      cur = out.graph.add_node(std::move(dw));

      LayerSpec sout;
      sout.kind = LayerKind::shuffle_channel;
      sout.name = n.name + ".shuffle_out";
      sout.inputs = {cur};
      sout.perm = invert_perm(s.perm);
      cur = out.graph.add_node(std::move(sout));

      rec.depthwise = true;
      rec.dw = std::move(s);
    } else {
      const TensorF& w = g.weights[size_t(n.weights)];
      ConvSecret<float> s = gen_layer_conv_secret(p, int(i), w.shape);

      LayerSpec conv = n;
      conv.inputs = {cur};
      conv.weights = out.graph.add_weight(transform_conv(w, s));
      cur = out.graph.add_node(std::move(conv));

      LayerSpec lt;
      lt.kind = LayerKind::linear_transform;
      lt.name = n.name + ".restore";
      lt.inputs = {cur};
      lt.weights = out.graph.add_weight(restore_filter(s));
      cur = out.graph.add_node(std::move(lt));

      rec.conv = std::move(s);
    }

    if (masked) {
      LayerSpec pop;
      pop.kind = LayerKind::pop_mask;
      pop.name = n.name + ".pop";
      pop.inputs = {cur};
      pop.mask_slot = slot_id;
      cur = out.graph.add_node(std::move(pop));
    }

    out.secrets.push_back(std::move(rec));
    nmap[i] = cur;
  }

  out.graph.output = nmap[size_t(g.output)];
  out.graph.validate();
  out.graph.infer_shapes();
  return out;
}

CollapsedModel convert_step2(const ConvertedModel& cm) {
  const ModelGraph& g = cm.graph;
  g.validate();
  const std::vector<Shape> shapes = g.infer_shapes();

  CollapsedModel out;
  out.params = cm.params;
  out.secrets = cm.secrets;
  out.graph.input_shape = g.input_shape;

  std::vector<int> nmap(g.nodes.size(), -1);
  std::vector<int> wmap(g.weights.size(), -1);
  auto weight = [&](int id) { return map_weight(g.weights, out.graph, wmap, id); };

  // Collapses every secure node feeding `tail` into one program. Secure work
  // shared with another region is duplicated into both; each placeholder stays
  // a single-output unit.
  auto build_region = [&](int tail) -> int {
    std::vector<int> stack{tail};
    std::set<int> seen{tail};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int in : g.nodes[size_t(u)].inputs)
        if (in >= 0 && secure_node(g, in) && seen.insert(in).second)
          stack.push_back(in);
    }
    const std::vector<int> order(seen.begin(), seen.end());  // ascending = topo

    std::map<int, int> local;
    for (size_t k = 0; k < order.size(); ++k) local[order[k]] = int(k);

    SecureSubgraph sg;
    sg.id = int(out.programs.size());
    sg.name = "tee" + std::to_string(sg.id);
    std::vector<int> sources;         // producer node ids; -1 = model input
    std::map<int, int> source_index;  // producer id -> region input index

    for (int gid : order) {
      LayerSpec c = g.nodes[size_t(gid)];
      for (int& in : c.inputs) {
        auto lit = local.find(in);
        if (in >= 0 && lit != local.end()) {
          in = lit->second;
          continue;
        }
        auto sit = source_index.find(in);
        int k;
        if (sit == source_index.end()) {
          k = int(sources.size());
          source_index.emplace(in, k);
          sources.push_back(in);
          sg.input_shapes.push_back(in < 0 ? g.input_shape
                                           : shapes[size_t(in)]);
        } else {
          k = sit->second;
        }
        in = -1 - k;
      }
      c.weights = weight(c.weights);
      c.gamma = weight(c.gamma);
      c.beta = weight(c.beta);
      c.mean = weight(c.mean);
      c.variance = weight(c.variance);
      c.scale = weight(c.scale);
      sg.nodes.push_back(std::move(c));
    }
    sg.output = local.at(tail);
    sg.out_shape = shapes[size_t(tail)];
    sg.merge = sources.size() >= 2;

    LayerSpec ph;
    ph.kind = sg.merge ? LayerKind::tee_merge : LayerKind::tee_shadow;
    ph.name = sg.name;
    for (int s : sources) ph.inputs.push_back(s < 0 ? -1 : nmap[size_t(s)]);
    ph.placeholder = sg.id;
    ph.out_shape = sg.out_shape;
    out.programs.push_back(std::move(sg));
    return out.graph.add_node(std::move(ph));
  };

  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerSpec& n = g.nodes[i];
    if (!is_outsourced_kind(n.kind)) continue;
    LayerSpec c = n;
    const int in = n.inputs[0];
    if (in >= 0 && secure_node(g, in))
      c.inputs = {build_region(in)};
    else
      c.inputs = {in < 0 ? -1 : nmap[size_t(in)]};
    c.weights = weight(n.weights);
    nmap[i] = out.graph.add_node(std::move(c));
  }

  out.graph.output =
      secure_node(g, g.output) ? build_region(g.output) : nmap[size_t(g.output)];

  out.mask_slots = cm.mask_slots;
  for (MaskSlot& s : out.mask_slots) s.orig_weights = weight(s.orig_weights);

  out.graph.validate();
  out.graph.infer_shapes();
  return out;
}

void split_model(const CollapsedModel& cm, PartA& a, PartB& b) {
  a = PartA{};
  b = PartB{};
  const ModelGraph& g = cm.graph;

  a.graph.input_shape = g.input_shape;
  std::vector<int> awmap(g.weights.size(), -1);
  for (const LayerSpec& n : g.nodes) {
    if (n.gamma >= 0 || n.beta >= 0 || n.mean >= 0 || n.variance >= 0 ||
        n.scale >= 0)
      throw InvalidParams("split: node '" + n.name +
                          "' carries secure-side tensors");
    LayerSpec c = n;
    c.weights = map_weight(g.weights, a.graph, awmap, n.weights);
    a.graph.add_node(std::move(c));
  }
  a.graph.output = g.output;
  a.graph.validate();

  b.input_shape = g.input_shape;
  b.ratio = cm.params.ratio;
  b.seed = cm.params.seed;
  std::vector<int> bwmap(g.weights.size(), -1);
  auto bweight = [&](int id) -> int {
    if (id < 0) return -1;
    int& slot = bwmap[size_t(id)];
    if (slot < 0) {
      slot = int(b.tensors.size());
      b.tensors.push_back(g.weights[size_t(id)]);
    }
    return slot;
  };
  b.programs = cm.programs;
  for (SecureSubgraph& sg : b.programs)
    for (LayerSpec& n : sg.nodes) {
      n.weights = bweight(n.weights);
      n.gamma = bweight(n.gamma);
      n.beta = bweight(n.beta);
      n.mean = bweight(n.mean);
      n.variance = bweight(n.variance);
      n.scale = bweight(n.scale);
    }
  b.mask_slots = cm.mask_slots;
  for (MaskSlot& s : b.mask_slots) s.orig_weights = bweight(s.orig_weights);
  b.secrets = cm.secrets;
  for (SecretRecord& r : b.secrets) r.orig_weights = bweight(r.orig_weights);
}

TensorF eval_program(const SecureSubgraph& sg, const std::vector<TensorF>& store,
                     const std::vector<const TensorF*>& region_inputs,
                     const MaskState* masks) {
  if (region_inputs.size() != sg.input_shapes.size())
    throw InvalidParams("program '" + sg.name + "': expected " +
                        std::to_string(sg.input_shapes.size()) + " inputs, got " +
                        std::to_string(region_inputs.size()));
  for (size_t k = 0; k < region_inputs.size(); ++k)
    if (region_inputs[k]->shape != sg.input_shapes[k])
      throw ShapeError("program '" + sg.name + "': input " + std::to_string(k) +
                       " shape " + region_inputs[k]->shape.str() + " != " +
                       sg.input_shapes[k].str());
  std::vector<TensorF> vals(sg.nodes.size());
  std::vector<const TensorF*> ins;
  for (size_t i = 0; i < sg.nodes.size(); ++i) {
    const LayerSpec& n = sg.nodes[i];
    ins.clear();
    for (int id : n.inputs)
      ins.push_back(id < 0 ? region_inputs[size_t(-1 - id)] : &vals[size_t(id)]);
    vals[i] = eval_layer(n, ins, store, masks);
  }
  return vals[size_t(sg.output)];
}

TensorF eval_collapsed(const CollapsedModel& cm, const TensorF& x,
                       const MaskState* masks) {
  const ModelGraph& g = cm.graph;
  if (x.shape != g.input_shape)
    throw ShapeError("eval: input shape " + x.shape.str() +
                     " != model input " + g.input_shape.str());
  std::vector<TensorF> vals(g.nodes.size());
  std::vector<const TensorF*> ins;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerSpec& n = g.nodes[i];
    ins.clear();
    for (int id : n.inputs) ins.push_back(id < 0 ? &x : &vals[size_t(id)]);
    if (n.kind == LayerKind::tee_shadow || n.kind == LayerKind::tee_merge)
      vals[i] = eval_program(cm.programs[size_t(n.placeholder)], g.weights, ins,
                             masks);
    else
      vals[i] = eval_layer(n, ins, g.weights, masks);
  }
  return vals[size_t(g.output)];
}

}  // namespace shadownet
