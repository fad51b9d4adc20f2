#include "shadownet/graph.hpp"

#include <unordered_set>

#include "shadownet/masking.hpp"

namespace shadownet {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::dwconv: return "dwconv";
    case LayerKind::pwconv: return "pwconv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu6: return "relu6";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::softmax: return "softmax";
    case LayerKind::add: return "add";
    case LayerKind::linear_transform: return "linear_transform";
    case LayerKind::shuffle_channel: return "shuffle_channel";
    case LayerKind::push_mask: return "push_mask";
    case LayerKind::pop_mask: return "pop_mask";
    case LayerKind::tee_shadow: return "tee_shadow";
    case LayerKind::tee_merge: return "tee_merge";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& name) {
  static const std::pair<const char*, LayerKind> table[] = {
      {"conv", LayerKind::conv},
      {"dwconv", LayerKind::dwconv},
      {"pwconv", LayerKind::pwconv},
      {"batchnorm", LayerKind::batchnorm},
      {"relu6", LayerKind::relu6},
      {"avgpool", LayerKind::avgpool},
      {"maxpool", LayerKind::maxpool},
      {"softmax", LayerKind::softmax},
      {"add", LayerKind::add},
      {"linear_transform", LayerKind::linear_transform},
      {"shuffle_channel", LayerKind::shuffle_channel},
      {"push_mask", LayerKind::push_mask},
      {"pop_mask", LayerKind::pop_mask},
      {"tee_shadow", LayerKind::tee_shadow},
      {"tee_merge", LayerKind::tee_merge},
  };
  for (const auto& [n, k] : table)
    if (name == n) return k;
  throw InvalidParams("unknown layer kind: " + name);
}

bool is_outsourced_kind(LayerKind k) {
  return k == LayerKind::conv || k == LayerKind::dwconv ||
         k == LayerKind::pwconv;
}

bool LayerSpec::operator==(const LayerSpec& o) const {
  return kind == o.kind && name == o.name && inputs == o.inputs &&
         stride == o.stride && padding == o.padding && window == o.window &&
         flatten_input == o.flatten_input && epsilon == o.epsilon &&
         weights == o.weights && gamma == o.gamma && beta == o.beta &&
         mean == o.mean && variance == o.variance &&
         mask_slot == o.mask_slot && perm == o.perm && scale == o.scale &&
         placeholder == o.placeholder &&
         (out_shape == o.out_shape ||
          (out_shape.rank == 0 && o.out_shape.rank == 0));
}

int ModelGraph::add_weight(TensorF t) {
  weights.push_back(std::move(t));
  return int(weights.size()) - 1;
}

int ModelGraph::add_node(LayerSpec n) {
  const int id = int(nodes.size());
  for (int in : n.inputs)
    if (in < -1 || in >= id)
      throw InvalidParams("node '" + n.name + "': input id " +
                          std::to_string(in) + " out of range");
  nodes.push_back(std::move(n));
  output = id;
  return id;
}

int ModelGraph::conv(const std::string& name, int input, TensorF kernel,
                     int stride, Padding padding) {
  LayerSpec n;
  n.kind = LayerKind::conv;
  n.name = name;
  n.inputs = {input};
  n.stride = stride;
  n.padding = padding;
  n.weights = add_weight(std::move(kernel));
  return add_node(std::move(n));
}

int ModelGraph::pwconv(const std::string& name, int input, TensorF kernel) {
  LayerSpec n;
  n.kind = LayerKind::pwconv;
  n.name = name;
  n.inputs = {input};
  n.weights = add_weight(std::move(kernel));
  return add_node(std::move(n));
}

int ModelGraph::dense(const std::string& name, int input, TensorF kernel) {
  LayerSpec n;
  n.kind = LayerKind::pwconv;
  n.name = name;
  n.inputs = {input};
  n.flatten_input = true;
  n.weights = add_weight(std::move(kernel));
  return add_node(std::move(n));
}

int ModelGraph::dwconv(const std::string& name, int input, TensorF kernel,
                       int stride, Padding padding) {
  LayerSpec n;
  n.kind = LayerKind::dwconv;
  n.name = name;
  n.inputs = {input};
  n.stride = stride;
  n.padding = padding;
  n.weights = add_weight(std::move(kernel));
  return add_node(std::move(n));
}

int ModelGraph::batchnorm(const std::string& name, int input, TensorF gamma_t,
                          TensorF beta_t, TensorF mean_t, TensorF variance_t,
                          float eps) {
  LayerSpec n;
  n.kind = LayerKind::batchnorm;
  n.name = name;
  n.inputs = {input};
  n.epsilon = eps;
  n.gamma = add_weight(std::move(gamma_t));
  n.beta = add_weight(std::move(beta_t));
  n.mean = add_weight(std::move(mean_t));
  n.variance = add_weight(std::move(variance_t));
  return add_node(std::move(n));
}

int ModelGraph::relu6(const std::string& name, int input) {
  LayerSpec n;
  n.kind = LayerKind::relu6;
  n.name = name;
  n.inputs = {input};
  return add_node(std::move(n));
}

int ModelGraph::avgpool(const std::string& name, int input, int window,
                        int stride) {
  LayerSpec n;
  n.kind = LayerKind::avgpool;
  n.name = name;
  n.inputs = {input};
  n.window = window;
  n.stride = stride;
  return add_node(std::move(n));
}

int ModelGraph::maxpool(const std::string& name, int input, int window,
                        int stride) {
  LayerSpec n;
  n.kind = LayerKind::maxpool;
  n.name = name;
  n.inputs = {input};
  n.window = window;
  n.stride = stride;
  return add_node(std::move(n));
}

int ModelGraph::softmax(const std::string& name, int input) {
  LayerSpec n;
  n.kind = LayerKind::softmax;
  n.name = name;
  n.inputs = {input};
  return add_node(std::move(n));
}

int ModelGraph::add(const std::string& name, int a, int b) {
  LayerSpec n;
  n.kind = LayerKind::add;
  n.name = name;
  n.inputs = {a, b};
  return add_node(std::move(n));
}

int ModelGraph::find_node(const std::string& name) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].name == name) return int(i);
  return -1;
}

void ModelGraph::validate() const {
  if (input_shape.rank != 3)
    throw InvalidParams("model input shape must be rank 3, got " +
                        input_shape.str());
  if (output < 0 || output >= int(nodes.size()))
    throw InvalidParams("model output node not set");
  std::unordered_set<std::string> names;
  const int nw = int(weights.size());
  auto check_w = [&](int id, const LayerSpec& n, const char* field) {
    if (id < 0 || id >= nw)
      throw InvalidParams("node '" + n.name + "': missing " + field +
                          " tensor");
  };
  for (size_t i = 0; i < nodes.size(); ++i) {
    const LayerSpec& n = nodes[i];
    if (n.name.empty()) throw InvalidParams("unnamed node at " + std::to_string(i));
    if (!names.insert(n.name).second)
      throw InvalidParams("duplicate node name '" + n.name + "'");
    const size_t want_inputs =
        (n.kind == LayerKind::add || n.kind == LayerKind::tee_merge)
            ? 2
            : 1;
    if (n.kind == LayerKind::tee_merge ? n.inputs.size() < 2
                                       : n.inputs.size() != want_inputs)
      throw InvalidParams("node '" + n.name + "': wrong input count");
    for (int in : n.inputs)
      if (in < -1 || in >= int(i))
        throw InvalidParams("node '" + n.name + "': input id out of order");
    switch (n.kind) {
      case LayerKind::conv:
      case LayerKind::dwconv:
      case LayerKind::pwconv:
      case LayerKind::linear_transform:
        check_w(n.weights, n, "kernel");
        break;
      case LayerKind::batchnorm:
        check_w(n.gamma, n, "gamma");
        check_w(n.beta, n, "beta");
        check_w(n.mean, n, "mean");
        check_w(n.variance, n, "variance");
        break;
      case LayerKind::avgpool:
      case LayerKind::maxpool:
        if (n.window < 1) throw InvalidParams("node '" + n.name + "': window must be >= 1");
        break;
      case LayerKind::shuffle_channel:
        if (n.perm.empty())
          throw InvalidParams("node '" + n.name + "': missing permutation");
        break;
      case LayerKind::push_mask:
      case LayerKind::pop_mask:
        if (n.mask_slot < 0)
          throw InvalidParams("node '" + n.name + "': missing mask slot");
        break;
      default:
        break;
    }
  }
}

std::vector<Shape> ModelGraph::infer_shapes() const {
  std::vector<Shape> out(nodes.size());
  auto in_shape = [&](const LayerSpec& n, int idx) -> const Shape& {
    const int id = n.inputs[size_t(idx)];
    return id < 0 ? input_shape : out[size_t(id)];
  };
  for (size_t i = 0; i < nodes.size(); ++i) {
    const LayerSpec& n = nodes[i];
    const Shape& s = in_shape(n, 0);
    switch (n.kind) {
      case LayerKind::conv:
      case LayerKind::pwconv: {
        const Shape& ws = weights[size_t(n.weights)].shape;
        const int cin = n.flatten_input ? int(s.count()) : s.c();
        if (cin != ws.cin())
          throw ShapeError("node '" + n.name + "': input channels (" +
                           std::to_string(cin) + ") != kernel cin (" +
                           std::to_string(ws.cin()) + ")");
        const int h = n.flatten_input ? 1 : s.h();
        const int w = n.flatten_input ? 1 : s.w();
        out[i] = Shape::hwc(
            conv_out_dim(h, ws.kh(), n.stride, n.padding, "height"),
            conv_out_dim(w, ws.kw(), n.stride, n.padding, "width"), ws.n());
        break;
      }
      case LayerKind::dwconv: {
        const Shape& ws = weights[size_t(n.weights)].shape;
        if (s.c() != ws.c())
          throw ShapeError("node '" + n.name + "': input channels (" +
                           std::to_string(s.c()) + ") != kernel channels (" +
                           std::to_string(ws.c()) + ")");
        out[i] = Shape::hwc(
            conv_out_dim(s.h(), ws.h(), n.stride, n.padding, "height"),
            conv_out_dim(s.w(), ws.w(), n.stride, n.padding, "width"), s.c());
        break;
      }
      case LayerKind::batchnorm: {
        const size_t c = weights[size_t(n.gamma)].count();
        if (c != size_t(s.c()))
          throw ShapeError("node '" + n.name + "': gamma channels (" +
                           std::to_string(c) + ") != input channels (" +
                           std::to_string(s.c()) + ")");
        out[i] = s;
        break;
      }
      case LayerKind::relu6:
      case LayerKind::softmax:
      case LayerKind::push_mask:
      case LayerKind::pop_mask:
        out[i] = s;
        break;
      case LayerKind::avgpool:
      case LayerKind::maxpool:
        out[i] = Shape::hwc(
            conv_out_dim(s.h(), n.window, n.stride, Padding::valid, "height"),
            conv_out_dim(s.w(), n.window, n.stride, Padding::valid, "width"),
            s.c());
        break;
      case LayerKind::add: {
        const Shape& b = in_shape(n, 1);
        if (!(s == b))
          throw ShapeError("node '" + n.name + "': operand shapes differ " +
                           s.str() + " vs " + b.str());
        out[i] = s;
        break;
      }
      case LayerKind::linear_transform: {
        const Shape& ws = weights[size_t(n.weights)].shape;
        if (s.c() != ws.cin())
          throw ShapeError("node '" + n.name + "': input channels (" +
                           std::to_string(s.c()) + ") != restore rows (" +
                           std::to_string(ws.cin()) + ")");
        out[i] = Shape::hwc(s.h(), s.w(), ws.n());
        break;
      }
      case LayerKind::shuffle_channel: {
        if (int(n.perm.size()) != s.c())
          throw ShapeError("node '" + n.name + "': permutation size (" +
                           std::to_string(n.perm.size()) +
                           ") != channels (" + std::to_string(s.c()) + ")");
        out[i] = s;
        break;
      }
      case LayerKind::tee_shadow:
      case LayerKind::tee_merge:
        if (n.out_shape.rank == 0)
          throw ShapeError("node '" + n.name + "': placeholder missing shape");
        out[i] = n.out_shape;
        break;
    }
  }
  return out;
}

bool ModelGraph::operator==(const ModelGraph& o) const {
  if (!(input_shape == o.input_shape) || output != o.output ||
      nodes.size() != o.nodes.size() || weights.size() != o.weights.size())
    return false;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (!(nodes[i] == o.nodes[i])) return false;
  for (size_t i = 0; i < weights.size(); ++i)
    if (!bitwise_equal(weights[i], o.weights[i])) return false;
  return true;
}

TensorF eval_layer(const LayerSpec& n, const std::vector<const TensorF*>& ins,
                   const std::vector<TensorF>& weights,
                   const MaskState* masks) {
  const TensorF& a = *ins.at(0);
  switch (n.kind) {
    case LayerKind::conv:
    case LayerKind::pwconv:
      if (n.flatten_input) return ops::dense(a, weights[size_t(n.weights)]);
      return ops::conv2d(a, weights[size_t(n.weights)], n.stride, n.padding);
    case LayerKind::dwconv:
      return ops::dwconv2d(a, weights[size_t(n.weights)], n.stride, n.padding);
    case LayerKind::batchnorm:
      return ops::batchnorm(a, weights[size_t(n.gamma)],
                            weights[size_t(n.beta)], weights[size_t(n.mean)],
                            weights[size_t(n.variance)], n.epsilon);
    case LayerKind::relu6:
      return ops::relu6(a);
    case LayerKind::avgpool:
      return ops::avg_pool(a, n.window, n.stride);
    case LayerKind::maxpool:
      return ops::max_pool(a, n.window, n.stride);
    case LayerKind::softmax:
      return ops::softmax(a);
    case LayerKind::add:
      return ops::add(a, *ins.at(1));
    case LayerKind::linear_transform:
      return ops::pointwise_conv(a, weights[size_t(n.weights)]);
    case LayerKind::shuffle_channel: {
      TensorF out = a;
      std::vector<float> tmp(size_t(a.shape.c()));
      ops::span::shuffle(out.v.data(), a.shape.h() * a.shape.w(), a.shape.c(),
                         n.perm.data(),
                         n.scale >= 0 ? weights[size_t(n.scale)].v.data()
                                      : nullptr,
                         tmp.data());
      return out;
    }
    case LayerKind::push_mask:
    case LayerKind::pop_mask: {
      if (!masks)
        throw InvalidParams("eval: node '" + n.name + "' needs a mask state");
      const bool push = n.kind == LayerKind::push_mask;
      const TensorF& t =
          push ? masks->m[size_t(n.mask_slot)] : masks->u[size_t(n.mask_slot)];
      if (t.shape != a.shape)
        throw ShapeError("eval: node '" + n.name + "': mask shape " +
                         t.shape.str() + " != activation " + a.shape.str());
      TensorF out = a;
      ops::span::axpy_mask(out.v.data(), t.v.data(), out.count(),
                           push ? 1.0f : -1.0f);
      return out;
    }
    case LayerKind::tee_shadow:
    case LayerKind::tee_merge:
      break;
  }
  throw InvalidParams("eval: node '" + n.name +
                      "' is a placeholder; use the split runtime");
}

std::vector<TensorF> eval_all(const ModelGraph& g, const TensorF& x,
                              const MaskState* masks) {
  if (x.shape != g.input_shape)
    throw ShapeError("eval: input shape " + x.shape.str() +
                     " != model input " + g.input_shape.str());
  std::vector<TensorF> vals(g.nodes.size());
  std::vector<const TensorF*> ins;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerSpec& n = g.nodes[i];
    ins.clear();
    for (int id : n.inputs) ins.push_back(id < 0 ? &x : &vals[size_t(id)]);
    vals[i] = eval_layer(n, ins, g.weights, masks);
  }
  return vals;
}

TensorF eval_graph(const ModelGraph& g, const TensorF& x,
                   const MaskState* masks) {
  return eval_all(g, x, masks)[size_t(g.output)];
}

}  // namespace shadownet
