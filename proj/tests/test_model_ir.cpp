#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "shadownet/convert.hpp"
#include "shadownet/error.hpp"
#include "shadownet/masking.hpp"
#include "shadownet/models.hpp"
#include "shadownet/serialize.hpp"

using namespace shadownet;

namespace {

std::string tmp_path(const std::string& name) {
  return std::string("/tmp/snm_ir_") + name;
}

std::vector<std::string> node_names(const ModelGraph& g) {
  std::vector<std::string> out;
  for (const auto& n : g.nodes) out.push_back(n.name);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f),
                     std::istreambuf_iterator<char>());
}

ObfuscationParams params(uint64_t seed) {
  ObfuscationParams p;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("layer expansion shapes and naming") {
  ModelGraph g = models::fig2(3);
  ConvertedModel cm = convert_step1(g, params(42));

  // First conv crosses with the raw input: no mask stages around it.
  auto nn = node_names(cm.graph);
  std::set<std::string> names(nn.begin(), nn.end());
  CHECK(names.count("conv1"));
  CHECK(names.count("conv1.restore"));
  CHECK(!names.count("conv1.push"));
  CHECK(!names.count("conv1.pop"));
  for (const char* layer : {"conv2", "conv3", "conv4"}) {
    CHECK(names.count(std::string(layer) + ".push"));
    CHECK(names.count(layer));
    CHECK(names.count(std::string(layer) + ".restore"));
    CHECK(names.count(std::string(layer) + ".pop"));
  }
  CHECK(cm.graph.nodes.size() == 12 + 1 + 3 * 3);

  // conv1: 8 kernels expand to floor(1.2 * 8) = 9; restore is (1, 1, 9, 8).
  int c1 = cm.graph.find_node("conv1");
  REQUIRE(c1 >= 0);
  const TensorF& tw =
      cm.graph.weights[size_t(cm.graph.nodes[size_t(c1)].weights)];
  CHECK(tw.shape == Shape::filt(3, 3, 3, 9));
  int r1 = cm.graph.find_node("conv1.restore");
  REQUIRE(r1 >= 0);
  const TensorF& rw =
      cm.graph.weights[size_t(cm.graph.nodes[size_t(r1)].weights)];
  CHECK(rw.shape == Shape::filt(1, 1, 9, 8));

  // Stride and padding ride along on the transformed node.
  int c2 = cm.graph.find_node("conv2");
  CHECK(cm.graph.nodes[size_t(c2)].stride == 2);

  REQUIRE(cm.mask_slots.size() == 3);
  CHECK(cm.mask_slots[0].layer == "conv2");
  CHECK(cm.mask_slots[0].shape == Shape::hwc(16, 16, 8));
  CHECK(cm.mask_slots[0].u_shape == Shape::hwc(8, 8, 12));

  REQUIRE(cm.secrets.size() == 4);
  CHECK(cm.secrets[0].layer == "conv1");
  CHECK(cm.secrets[0].orig_weights == -1);  // unmasked: no unmask term needed
  for (size_t i = 1; i < 4; ++i) CHECK(cm.secrets[i].orig_weights >= 0);
}

TEST_CASE("per-layer secrets are independent of surrounding layers") {
  // The same layer converted under the same seed yields the same secret even
  // when the rest of the model changes, because derivation keys on node id
  // within the original graph; two different node ids diverge.
  ModelGraph g = models::fig2(3);
  ConvertedModel cm = convert_step1(g, params(7));
  ConvertedModel cm2 = convert_step1(g, params(7));
  CHECK(cm.secrets[1].conv == cm2.secrets[1].conv);
  CHECK(!(cm.secrets[1].conv == cm.secrets[2].conv));
}

TEST_CASE("depthwise layers get shuffle stages instead of a restore") {
  ModelGraph g = models::mobile_toy(5);
  ConvertedModel cm = convert_step1(g, params(9));
  auto nn = node_names(cm.graph);
  std::set<std::string> names(nn.begin(), nn.end());
  CHECK(names.count("dw1.shuffle_in"));
  CHECK(names.count("dw1"));
  CHECK(names.count("dw1.shuffle_out"));
  CHECK(!names.count("dw1.restore"));

  int si = cm.graph.find_node("dw1.shuffle_in");
  const LayerSpec& shuffle_in = cm.graph.nodes[size_t(si)];
  REQUIRE(shuffle_in.scale >= 0);  // counter-scales by 1/lambda
  CHECK(int(shuffle_in.perm.size()) == 8);
  int so = cm.graph.find_node("dw1.shuffle_out");
  CHECK(cm.graph.nodes[size_t(so)].scale < 0);  // unit scale on the way out

  // Depthwise kernels keep their shape: only scaled and permuted.
  int dw = cm.graph.find_node("dw1");
  CHECK(cm.graph.weights[size_t(cm.graph.nodes[size_t(dw)].weights)].shape ==
        Shape::hwc(3, 3, 8));
}

TEST_CASE("expanded graph evaluates like the original") {
  for (const char* name : {"fig2", "mobile-toy", "shortcut"}) {
    ModelGraph g = models::by_name(name, 11);
    ConvertedModel cm = convert_step1(g, params(23));
    MaskState masks =
        generate_round_masks(cm.mask_slots, cm.graph.weights, 99, 1);
    Rng rng(17);
    TensorF x = models::random_activation(g.input_shape, rng);
    TensorF want = eval_graph(g, x);
    TensorF got = eval_graph(cm.graph, x, &masks);
    REQUIRE(got.shape == want.shape);
    CHECK(rel_error(got, want) <= 1e-4);
  }
}

TEST_CASE("secure runs collapse into programs") {
  ModelGraph g = models::fig2(3);
  CollapsedModel cm = convert_step2(convert_step1(g, params(42)));

  REQUIRE(cm.programs.size() == 4);
  for (const auto& p : cm.programs) CHECK(!p.merge);

  // Part A alternates transformed convs and secure placeholders.
  REQUIRE(cm.graph.nodes.size() == 8);
  for (size_t i = 0; i < 8; ++i) {
    if (i % 2 == 0)
      CHECK(cm.graph.nodes[i].kind == LayerKind::conv);
    else
      CHECK(cm.graph.nodes[i].kind == LayerKind::tee_shadow);
  }

  // The run between conv1 and conv2 carries restore, bn, relu, and the next
  // layer's mask push, in execution order.
  const SecureSubgraph& p0 = cm.programs[0];
  REQUIRE(p0.nodes.size() == 4);
  CHECK(p0.nodes[0].name == "conv1.restore");
  CHECK(p0.nodes[1].name == "conv1_bn");
  CHECK(p0.nodes[2].name == "conv1_relu");
  CHECK(p0.nodes[3].name == "conv2.push");

  // The tail run unmasks the last conv and finishes the model.
  const SecureSubgraph& p3 = cm.programs[3];
  CHECK(p3.nodes.front().name == "conv4.restore");
  CHECK(p3.nodes.back().name == "head_softmax");
  CHECK(p3.out_shape == Shape::hwc(1, 1, 10));
}

TEST_CASE("shortcut joins become a two-input merge program") {
  ModelGraph g = models::shortcut(3);
  CollapsedModel cm = convert_step2(convert_step1(g, params(42)));

  int merges = 0;
  for (const auto& p : cm.programs)
    if (p.merge) {
      ++merges;
      CHECK(p.input_shapes.size() == 2);
      std::set<std::string> names;
      for (const auto& n : p.nodes) names.insert(n.name);
      CHECK(names.count("merge"));
      CHECK(names.count("conv_left.restore"));
      CHECK(names.count("conv_right.restore"));
    }
  CHECK(merges == 1);

  // The shared secure prefix is duplicated into both branch programs.
  int with_prefix = 0;
  for (const auto& p : cm.programs)
    for (const auto& n : p.nodes)
      if (n.name == "conv_in.restore") ++with_prefix;
  CHECK(with_prefix == 2);
}

TEST_CASE("collapsed models evaluate like the original") {
  for (const char* name : {"fig2", "shortcut", "mobile-toy", "minivgg-toy"}) {
    ModelGraph g = models::by_name(name, 29);
    CollapsedModel cm = convert_step2(convert_step1(g, params(31)));
    MaskState masks =
        generate_round_masks(cm.mask_slots, cm.graph.weights, 5, 2);
    Rng rng(41);
    TensorF x = models::random_activation(g.input_shape, rng);
    TensorF want = eval_graph(g, x);
    TensorF got = eval_collapsed(cm, x, &masks);
    REQUIRE(got.shape == want.shape);
    CHECK(rel_error(got, want) <= 1e-4);
  }
}

TEST_CASE("random graphs survive the full pipeline") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    ModelGraph g = models::random_model(seed);
    CollapsedModel cm = convert_step2(convert_step1(g, params(seed + 100)));
    MaskState masks =
        generate_round_masks(cm.mask_slots, cm.graph.weights, seed, 1);
    Rng rng(seed * 7 + 1);
    TensorF x = models::random_activation(g.input_shape, rng);
    TensorF want = eval_graph(g, x);
    TensorF got = eval_collapsed(cm, x, &masks);
    CHECK(rel_error(got, want) <= 1e-4);
  }
}

TEST_CASE("the outsourced half carries no secret material") {
  ModelGraph g = models::mobile_toy(3);
  CollapsedModel cm = convert_step2(convert_step1(g, params(42)));
  PartA a;
  PartB b;
  split_model(cm, a, b);

  for (const LayerSpec& n : a.graph.nodes) {
    bool allowed = n.kind == LayerKind::conv || n.kind == LayerKind::pwconv ||
                   n.kind == LayerKind::dwconv ||
                   n.kind == LayerKind::tee_shadow ||
                   n.kind == LayerKind::tee_merge;
    CHECK(allowed);
    CHECK(n.gamma < 0);
    CHECK(n.scale < 0);
    CHECK(n.perm.empty());
    CHECK(n.mask_slot < 0);
  }

  // No published tensor may be an original kernel (scaling plus filler, or
  // scaling plus permutation, always changes the bank).
  for (const TensorF& published : a.graph.weights)
    for (const TensorF& orig : g.weights)
      if (published.shape == orig.shape) CHECK(!bitwise_equal(published, orig));

  // The trusted half keeps everything the programs reference.
  for (const SecureSubgraph& p : b.programs)
    for (const LayerSpec& n : p.nodes) {
      if (n.weights >= 0) CHECK(size_t(n.weights) < b.tensors.size());
      if (n.gamma >= 0) CHECK(size_t(n.gamma) < b.tensors.size());
      if (n.scale >= 0) CHECK(size_t(n.scale) < b.tensors.size());
    }
  for (const MaskSlot& s : b.mask_slots) {
    REQUIRE(s.orig_weights >= 0);
    CHECK(size_t(s.orig_weights) < b.tensors.size());
  }
  CHECK(b.seed == 42);
  CHECK(b.ratio == 1.2);
  CHECK(b.input_shape == g.input_shape);
}

TEST_CASE("model files round-trip byte for byte") {
  ModelGraph g = models::shortcut(13);
  std::string p1 = tmp_path("m1.snm"), p2 = tmp_path("m2.snm");
  save_model(p1, g);
  CHECK(container_kind(p1) == "model");

  ModelGraph g2 = load_model(p1);
  CHECK(g2 == g);
  save_model(p2, g2);
  CHECK(read_file(p1) == read_file(p2));

  Rng rng(3);
  TensorF x = models::random_activation(g.input_shape, rng);
  CHECK(bitwise_equal(eval_graph(g, x), eval_graph(g2, x)));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("split halves round-trip through their containers") {
  ModelGraph g = models::mobile_toy(21);
  PartA a;
  PartB b;
  CollapsedModel cm = convert_step2(convert_step1(g, params(77)));
  split_model(cm, a, b);

  std::string pa = tmp_path("a.snm"), pb = tmp_path("b.snm");
  save_part_a(pa, a);
  save_part_b(pb, b);
  CHECK(container_kind(pa) == "part-a");
  CHECK(container_kind(pb) == "part-b");

  PartA a2 = load_part_a(pa);
  CHECK(a2.graph == a.graph);

  PartB b2 = load_part_b(pb);
  CHECK(b2.input_shape == b.input_shape);
  CHECK(b2.ratio == b.ratio);
  CHECK(b2.seed == b.seed);
  REQUIRE(b2.programs.size() == b.programs.size());
  for (size_t i = 0; i < b.programs.size(); ++i)
    CHECK(b2.programs[i] == b.programs[i]);
  REQUIRE(b2.tensors.size() == b.tensors.size());
  for (size_t i = 0; i < b.tensors.size(); ++i)
    CHECK(bitwise_equal(b2.tensors[i], b.tensors[i]));
  REQUIRE(b2.mask_slots.size() == b.mask_slots.size());
  for (size_t i = 0; i < b.mask_slots.size(); ++i)
    CHECK(b2.mask_slots[i] == b.mask_slots[i]);
  REQUIRE(b2.secrets.size() == b.secrets.size());
  for (size_t i = 0; i < b.secrets.size(); ++i)
    CHECK(b2.secrets[i] == b.secrets[i]);

  // Second save of the loaded copy is byte-identical (canonical encoding).
  std::string pb2 = tmp_path("b2.snm");
  save_part_b(pb2, b2);
  CHECK(read_file(pb) == read_file(pb2));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
  std::remove(pb2.c_str());
}

TEST_CASE("tensor files round-trip") {
  Rng rng(9);
  TensorF t = models::random_activation(Shape::hwc(5, 7, 3), rng);
  std::string p = tmp_path("t.snm");
  save_tensor(p, t);
  CHECK(container_kind(p) == "tensor");
  TensorF t2 = load_tensor(p);
  CHECK(t2.shape == t.shape);
  CHECK(bitwise_equal(t2, t));
  std::remove(p.c_str());
}

TEST_CASE("malformed files are rejected") {
  CHECK_THROWS_AS(load_model("/tmp/snm_ir_missing.snm"), IoError);

  std::string p = tmp_path("bad.snm");
  std::ofstream(p, std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(load_model(p), IoError);

  // Truncated: valid magic, cut header.
  ModelGraph g = models::fig1(1);
  std::string full = tmp_path("full.snm");
  save_model(full, g);
  std::string bytes = read_file(full);
  std::ofstream(p, std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_model(p), IoError);

  // Wrong container for the loader.
  CHECK_THROWS_AS(load_part_b(full), IoError);
  std::remove(p.c_str());
  std::remove(full.c_str());
}
