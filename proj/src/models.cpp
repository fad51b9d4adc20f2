#include "shadownet/models.hpp"

#include <cmath>

#include "shadownet/error.hpp"

namespace shadownet {
namespace models {

namespace {

TensorF conv_kernel(Rng& rng, int kh, int kw, int cin, int n) {
  TensorF t(Shape::filt(kh, kw, cin, n));
  const double bound = std::sqrt(6.0 / double(kh * kw * cin));
  for (auto& e : t.v) e = float(rng.uniform(-bound, bound));
  return t;
}

TensorF dw_kernel(Rng& rng, int kh, int kw, int c) {
  TensorF t(Shape::hwc(kh, kw, c));
  const double bound = std::sqrt(6.0 / double(kh * kw));
  for (auto& e : t.v) e = float(rng.uniform(-bound, bound));
  return t;
}

struct BnParams {
  TensorF gamma, beta, mean, variance;
};

BnParams bn_params(Rng& rng, int c) {
  BnParams p{TensorF(Shape::hwc(1, 1, c)), TensorF(Shape::hwc(1, 1, c)),
             TensorF(Shape::hwc(1, 1, c)), TensorF(Shape::hwc(1, 1, c))};
  for (int i = 0; i < c; ++i) {
    p.gamma.v[size_t(i)] = float(rng.uniform(0.8, 1.2));
    p.beta.v[size_t(i)] = float(rng.uniform(-0.3, 0.3));
    p.mean.v[size_t(i)] = float(rng.uniform(-0.2, 0.2));
    p.variance.v[size_t(i)] = float(rng.uniform(0.5, 1.5));
  }
  return p;
}

int bn_relu(ModelGraph& g, Rng& rng, const std::string& stem, int node, int c) {
  BnParams p = bn_params(rng, c);
  node = g.batchnorm(stem + "_bn", node, std::move(p.gamma), std::move(p.beta),
                     std::move(p.mean), std::move(p.variance));
  return g.relu6(stem + "_relu", node);
}

}  // namespace

ModelGraph fig1(uint64_t seed) {
  Rng rng(seed);
  ModelGraph g;
  g.input_shape = Shape::hwc(32, 32, 3);
  int n = g.conv("conv1", -1, conv_kernel(rng, 3, 3, 3, 64), 1, Padding::same);
  bn_relu(g, rng, "conv1", n, 64);
  g.validate();
  g.infer_shapes();
  return g;
}

ModelGraph fig2(uint64_t seed) {
  Rng rng(seed);
  ModelGraph g;
  g.input_shape = Shape::hwc(16, 16, 3);
  int n = g.conv("conv1", -1, conv_kernel(rng, 3, 3, 3, 8), 1, Padding::same);
  n = bn_relu(g, rng, "conv1", n, 8);
  n = g.conv("conv2", n, conv_kernel(rng, 3, 3, 8, 12), 2, Padding::same);
  n = bn_relu(g, rng, "conv2", n, 12);
  n = g.conv("conv3", n, conv_kernel(rng, 3, 3, 12, 16), 1, Padding::same);
  n = bn_relu(g, rng, "conv3", n, 16);
  n = g.conv("conv4", n, conv_kernel(rng, 3, 3, 16, 10), 1, Padding::valid);
  n = g.avgpool("head_pool", n, 6, 6);
  g.softmax("head_softmax", n);
  g.validate();
  g.infer_shapes();
  return g;
}

ModelGraph shortcut(uint64_t seed) {
  Rng rng(seed);
  ModelGraph g;
  g.input_shape = Shape::hwc(12, 12, 3);
  int stem = g.conv("conv_in", -1, conv_kernel(rng, 3, 3, 3, 8), 1, Padding::same);
  stem = bn_relu(g, rng, "conv_in", stem, 8);
  const int left =
      g.conv("conv_left", stem, conv_kernel(rng, 3, 3, 8, 8), 1, Padding::same);
  const int right = g.pwconv("conv_right", stem, conv_kernel(rng, 1, 1, 8, 8));
  int n = g.add("merge", left, right);
  n = g.relu6("merge_relu", n);
  n = g.conv("conv_out", n, conv_kernel(rng, 3, 3, 8, 10), 1, Padding::valid);
  n = g.avgpool("head_pool", n, 10, 10);
  g.softmax("head_softmax", n);
  g.validate();
  g.infer_shapes();
  return g;
}

ModelGraph minivgg_toy(uint64_t seed) {
  Rng rng(seed);
  ModelGraph g;
  g.input_shape = Shape::hwc(16, 16, 3);
  // Widths are multiples of 5 so every sampled expansion ratio lands on an
  // integer kernel count and the scaling law can be checked as an identity.
  int n = g.conv("conv1", -1, conv_kernel(rng, 3, 3, 3, 10), 1, Padding::same);
  n = bn_relu(g, rng, "conv1", n, 10);
  n = g.conv("conv2", n, conv_kernel(rng, 3, 3, 10, 10), 1, Padding::same);
  n = bn_relu(g, rng, "conv2", n, 10);
  n = g.maxpool("pool1", n, 2, 2);
  n = g.conv("conv3", n, conv_kernel(rng, 3, 3, 10, 20), 1, Padding::same);
  n = bn_relu(g, rng, "conv3", n, 20);
  n = g.conv("conv4", n, conv_kernel(rng, 3, 3, 20, 20), 1, Padding::same);
  n = bn_relu(g, rng, "conv4", n, 20);
  n = g.maxpool("pool2", n, 2, 2);
  n = g.dense("fc1", n, conv_kernel(rng, 1, 1, 4 * 4 * 20, 40));
  n = g.relu6("fc1_relu", n);
  n = g.dense("fc2", n, conv_kernel(rng, 1, 1, 40, 10));
  g.softmax("head_softmax", n);
  g.validate();
  g.infer_shapes();
  return g;
}

ModelGraph mobile_toy(uint64_t seed) {
  Rng rng(seed);
  ModelGraph g;
  g.input_shape = Shape::hwc(16, 16, 3);
  int n = g.conv("conv_in", -1, conv_kernel(rng, 3, 3, 3, 8), 1, Padding::same);
  n = bn_relu(g, rng, "conv_in", n, 8);
  n = g.dwconv("dw1", n, dw_kernel(rng, 3, 3, 8), 1, Padding::same);
  n = bn_relu(g, rng, "dw1", n, 8);
  n = g.pwconv("pw1", n, conv_kernel(rng, 1, 1, 8, 16));
  n = bn_relu(g, rng, "pw1", n, 16);
  n = g.dwconv("dw2", n, dw_kernel(rng, 3, 3, 16), 2, Padding::same);
  n = bn_relu(g, rng, "dw2", n, 16);
  n = g.pwconv("pw2", n, conv_kernel(rng, 1, 1, 16, 16));
  n = bn_relu(g, rng, "pw2", n, 16);
  n = g.avgpool("head_pool", n, 8, 8);
  n = g.dense("fc", n, conv_kernel(rng, 1, 1, 16, 10));
  g.softmax("head_softmax", n);
  g.validate();
  g.infer_shapes();
  return g;
}

ModelGraph random_model(uint64_t seed) {
  Rng rng(seed);
  ModelGraph g;
  const int side = 8 + int(rng.uniform_int(5));
  int channels = 3 + int(rng.uniform_int(4));
  g.input_shape = Shape::hwc(side, side, channels);

  int node = -1;
  int spatial = side;
  int block = 0;
  auto stem = [&](const char* base) {
    return std::string(base) + std::to_string(block);
  };

  const int blocks = 2 + int(rng.uniform_int(3));
  bool used_shortcut = false;
  for (block = 1; block <= blocks; ++block) {
    const uint32_t pick = rng.uniform_int(4);
    if (pick == 0) {
      // depthwise separable pair
      node = g.dwconv(stem("dw"), node, dw_kernel(rng, 3, 3, channels), 1,
                      Padding::same);
      node = bn_relu(g, rng, stem("dw"), node, channels);
      const int out_c = 4 + int(rng.uniform_int(8));
      node = g.pwconv(stem("pw"), node,
                      conv_kernel(rng, 1, 1, channels, out_c));
      node = bn_relu(g, rng, stem("pw"), node, out_c);
      channels = out_c;
    } else if (pick == 1 && !used_shortcut && spatial >= 4) {
      // two-branch merge
      const int out_c = 4 + int(rng.uniform_int(6));
      const int left = g.conv(stem("sc_left"), node,
                              conv_kernel(rng, 3, 3, channels, out_c), 1,
                              Padding::same);
      const int right = g.pwconv(stem("sc_right"), node,
                                 conv_kernel(rng, 1, 1, channels, out_c));
      node = g.add(stem("sc_add"), left, right);
      node = g.relu6(stem("sc_relu"), node);
      channels = out_c;
      used_shortcut = true;
    } else {
      const int out_c = 4 + int(rng.uniform_int(8));
      node = g.conv(stem("conv"), node,
                    conv_kernel(rng, 3, 3, channels, out_c), 1, Padding::same);
      if (rng.uniform_int(4) != 0) {
        node = bn_relu(g, rng, stem("conv"), node, out_c);
      } else {
        node = g.relu6(stem("conv") + "_relu", node);
      }
      channels = out_c;
    }
    if (spatial >= 6 && rng.uniform_int(3) == 0) {
      node = rng.uniform_int(2) ? g.maxpool(stem("pool"), node, 2, 2)
                                : g.avgpool(stem("pool"), node, 2, 2);
      spatial = (spatial - 2) / 2 + 1;
    }
  }
  if (rng.uniform_int(2) == 0) {
    node = g.dense("fc", node,
                   conv_kernel(rng, 1, 1, spatial * spatial * channels,
                               4 + int(rng.uniform_int(8))));
    g.softmax("head_softmax", node);
  }
  g.validate();
  g.infer_shapes();
  return g;
}

ModelGraph by_name(const std::string& name, uint64_t seed) {
  if (name == "fig1") return fig1(seed);
  if (name == "fig2") return fig2(seed);
  if (name == "shortcut") return shortcut(seed);
  if (name == "minivgg-toy") return minivgg_toy(seed);
  if (name == "mobile-toy") return mobile_toy(seed);
  if (name == "random") return random_model(seed);
  throw InvalidParams("unknown model name '" + name + "'");
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {
      "fig1", "fig2", "shortcut", "minivgg-toy", "mobile-toy", "random"};
  return n;
}

TensorF random_activation(const Shape& s, Rng& rng) {
  TensorF t(s);
  for (auto& e : t.v) e = float(rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace models
}  // namespace shadownet
