#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "shadownet/analysis.hpp"
#include "shadownet/convert.hpp"
#include "shadownet/error.hpp"
#include "shadownet/models.hpp"
#include "shadownet/runtime.hpp"
#include "shadownet/serialize.hpp"

using namespace shadownet;

namespace {

// `--model` accepts either a built-in toy name or a .snm path.
ModelGraph resolve_model(const std::string& name_or_path, uint64_t seed) {
  for (const std::string& n : models::names())
    if (n == name_or_path) return models::by_name(name_or_path, seed);
  return load_model(name_or_path);
}

std::string human_bytes(size_t b) {
  char buf[64];
  if (b >= (1ull << 20))
    std::snprintf(buf, sizeof buf, "%.2f MiB", double(b) / double(1ull << 20));
  else
    std::snprintf(buf, sizeof buf, "%.1f KiB", double(b) / 1024.0);
  return buf;
}

struct ConvertArgs {
  std::string model = "fig2";
  uint64_t seed = 0;
  double ratio = 1.2;
  double mask_scale = 1.0;
  std::string domain = "continuous";
};

ObfuscationParams params_from(const ConvertArgs& c) {
  ObfuscationParams p;
  p.seed = c.seed;
  p.ratio = c.ratio;
  p.mask_scale = c.mask_scale;
  if (c.domain == "dyadic")
    p.domain = SecretDomain::dyadic;
  else if (c.domain != "continuous")
    throw InvalidParams("unknown secret domain " + c.domain);
  p.validate();
  return p;
}

void build_halves(const ConvertArgs& c, ModelGraph& g, PartA& a, PartB& b) {
  g = resolve_model(c.model, c.seed);
  CollapsedModel cm = convert_step2(convert_step1(g, params_from(c)));
  split_model(cm, a, b);
}

int cmd_gen(const std::string& name, uint64_t seed, const std::string& out) {
  ModelGraph g = models::by_name(name, seed);
  save_model(out, g);
  std::cout << "wrote " << out << ": " << g.nodes.size() << " layers, input "
            << g.input_shape.str() << "\n";
  return 0;
}

int cmd_convert(const ConvertArgs& c, const std::string& out_a,
                const std::string& out_b) {
  ModelGraph g;
  PartA a;
  PartB b;
  build_halves(c, g, a, b);
  save_part_a(out_a, a);
  save_part_b(out_b, b);
  size_t secure_floats = 0;
  for (const TensorF& t : b.tensors) secure_floats += t.v.size();
  std::cout << "part A: " << out_a << " (" << a.graph.nodes.size()
            << " nodes)\n";
  std::cout << "part B: " << out_b << " (" << b.programs.size()
            << " programs, " << b.mask_slots.size() << " mask slots, "
            << human_bytes(secure_floats * sizeof(float)) << " tensors)\n";
  return 0;
}

int cmd_infer(const std::string& pa, const std::string& pb,
              const std::string& input, uint64_t rand_seed, bool random_input,
              size_t budget, int rounds, uint64_t mask_seed,
              const std::string& out, const std::string& dump_view) {
  Session sess;
  {
    PartA a = load_part_a(pa);
    PartB b = load_part_b(pb);
    sess.init(std::move(a), std::move(b), budget);
  }

  TensorF x;
  if (random_input) {
    Rng rng(rand_seed, 0x1217);
    x = models::random_activation(sess.part_a().input_shape, rng);
  } else {
    x = load_tensor(input);
  }

  const TensorF* y = nullptr;
  AdversaryView view;
  for (int r = 1; r <= rounds; ++r) {
    sess.round_begin(mask_seed, uint64_t(r));
    bool last = r == rounds;
    y = &sess.infer(x, last && !dump_view.empty() ? &view : nullptr);
  }

  const MemoryStats& st = sess.secure().stats();
  std::cout << "output " << y->shape.str() << " after " << rounds
            << " round(s); secure footprint " << human_bytes(st.footprint())
            << "\n";
  size_t show = std::min<size_t>(y->v.size(), 8);
  std::cout << "head:";
  for (size_t i = 0; i < show; ++i) std::printf(" %.6g", double(y->v[i]));
  std::cout << "\n";

  if (!out.empty()) {
    save_tensor(out, *y);
    std::cout << "wrote " << out << "\n";
  }
  if (!dump_view.empty()) {
    nlohmann::ordered_json j;
    j["input"] = view.input.shape.str();
    j["output"] = view.output.shape.str();
    j["boundaries"] = nlohmann::ordered_json::array();
    for (const BoundaryRecord& rec : view.records)
      j["boundaries"].push_back({{"seq", rec.seq},
                                 {"layer", rec.layer},
                                 {"masked", rec.masked},
                                 {"shape", rec.tensor.shape.str()}});
    j["published_weights"] = nlohmann::ordered_json::array();
    for (const auto& w : view.weights)
      j["published_weights"].push_back(
          {{"layer", w.first}, {"shape", w.second.shape.str()}});
    FILE* f = std::fopen(dump_view.c_str(), "wb");
    if (!f) throw IoError("cannot write " + dump_view);
    std::string s = j.dump(2);
    std::fwrite(s.data(), 1, s.size(), f);
    std::fclose(f);
    std::cout << "wrote " << dump_view << "\n";
  }
  return 0;
}

int cmd_verify(const ConvertArgs& c, int trials, double tolerance,
               size_t budget, uint64_t verify_seed,
               const std::string& sabotage_arg) {
  ModelGraph g;
  PartA a;
  PartB b;
  build_halves(c, g, a, b);

  VerifyOptions opt;
  opt.trials = trials;
  opt.tolerance = tolerance;
  opt.budget_bytes = budget;
  opt.seed = verify_seed;

  if (!sabotage_arg.empty()) {
    auto colon = sabotage_arg.find(':');
    std::string kind = sabotage_arg.substr(0, colon);
    std::string layer =
        colon == std::string::npos ? "" : sabotage_arg.substr(colon + 1);
    if (kind == "scale")
      sabotage::flip_restore_scale(b, layer);
    else if (kind == "perm")
      sabotage::swap_restore_rows(b, layer);
    else if (sabotage_arg == "stale-unmask")
      opt.stale_unmask = true;
    else
      throw InvalidParams("unknown sabotage " + sabotage_arg);
  }

  VerifyReport rep = verify_model(g, a, b, opt);
  if (rep.ok) {
    std::cout << "ok: " << rep.trials << " trials, max relative error "
              << rep.max_eta << "\n";
    return 0;
  }
  std::cout << "FAILED at layer " << rep.first_bad_layer << " (relative error "
            << rep.bad_eta << ", output " << rep.max_eta << ")\n";
  return 1;
}

int cmd_bench(const ConvertArgs& c, int reps, size_t budget) {
  ModelGraph g;
  PartA a;
  PartB b;
  build_halves(c, g, a, b);
  size_t programs = b.programs.size();

  Session sess;
  sess.init(std::move(a), std::move(b), budget);
  Rng rng(c.seed, 0xBE);
  TensorF x = models::random_activation(sess.part_a().input_shape, rng);

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  sess.round_begin(1, 1);
  auto t1 = clock::now();
  sess.infer(x);  // warm
  auto t2 = clock::now();
  for (int i = 0; i < reps; ++i) sess.infer(x);
  auto t3 = clock::now();

  auto ms = [](auto d) {
    return std::chrono::duration<double, std::milli>(d).count();
  };
  const MemoryStats& st = sess.secure().stats();
  std::cout << "model " << c.model << ": " << sess.part_a().nodes.size()
            << " outsourced nodes, " << programs << " secure programs\n";
  std::cout << "mask refresh " << ms(t1 - t0) << " ms, first infer "
            << ms(t2 - t1) << " ms, steady "
            << ms(t3 - t2) / std::max(reps, 1) << " ms/infer (" << reps
            << " reps)\n";
  std::cout << "secure footprint " << human_bytes(st.footprint()) << " ("
            << human_bytes(st.tensor_bytes) << " tensors + "
            << human_bytes(st.activation_bytes) << " activations)\n";
  return 0;
}

int cmd_attack_sim(const ConvertArgs& c, int preimages, uint64_t sample_seed,
                   bool as_json) {
  ModelGraph g = resolve_model(c.model, c.seed);
  ObfuscationParams p = params_from(c);
  ConvertedModel cm = convert_step1(g, p);

  nlohmann::ordered_json j;
  j["model"] = c.model;
  j["ratio"] = c.ratio;
  ParamCounts counts = count_equivalent_params(g, c.ratio);
  j["victim_params"] = counts.victim;
  j["adversary_params"] = counts.adversary;
  j["layers"] = nlohmann::ordered_json::array();

  bool all_ok = true;
  for (const SecretRecord& rec : cm.secrets) {
    int tid = cm.graph.find_node(rec.layer);
    const TensorF& transformed =
        cm.graph.weights.at(size_t(cm.graph.nodes[size_t(tid)].weights));
    int oid = g.find_node(rec.layer);
    const TensorF& original =
        g.weights.at(size_t(g.nodes[size_t(oid)].weights));

    nlohmann::ordered_json lj;
    lj["layer"] = rec.layer;
    int verified = 0;
    bool truth = false;
    if (rec.depthwise) {
      int n = rec.dw->n;
      lj["kernels"] = n;
      lj["published"] = n;
      lj["witness_classes"] = 1;  // position classes collapse; scalars remain
      auto cands = dw_sample_preimages(transformed, preimages, p, sample_seed);
      for (const auto& cand : cands)
        verified += dw_verify_preimage(transformed, cand, p) ? 1 : 0;
      truth = dw_verify_preimage(transformed,
                                 dw_true_preimage(original, *rec.dw), p);
    } else {
      int n = rec.conv->n, m = rec.conv->m;
      lj["kernels"] = n;
      lj["published"] = m;
      lj["witness_classes"] = witness_class_count(m, m - n);
      auto cands = sample_preimages(transformed, n, preimages, p, sample_seed);
      for (const auto& cand : cands)
        verified += verify_preimage(transformed, cand, p) ? 1 : 0;
      truth = verify_preimage(transformed, true_preimage(original, *rec.conv), p);
    }
    lj["sampled"] = preimages;
    lj["verified"] = verified;
    lj["true_preimage_verified"] = truth;
    all_ok = all_ok && verified == preimages && truth;
    j["layers"].push_back(lj);

    if (!as_json)
      std::cout << "layer " << rec.layer << ": " << lj["published"]
                << " published kernels hide " << lj["kernels"] << " real ("
                << lj["witness_classes"] << " position classes); " << verified
                << "/" << preimages << " sampled preimages exact, true "
                << (truth ? "exact" : "MISSED") << "\n";
  }
  if (as_json) {
    j["all_verified"] = all_ok;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "parameters: victim " << counts.victim << ", adversary "
              << counts.adversary << "\n";
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shadow-model toolchain: split CNNs for untrusted execution"};
  app.require_subcommand(1);

  // gen
  std::string gen_name = "fig2", gen_out = "model.snm";
  uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen", "generate a toy model file");
  gen->add_option("--name", gen_name, "built-in model name")
      ->check(CLI::IsMember(models::names()));
  gen->add_option("--seed", gen_seed, "weight seed");
  gen->add_option("--out", gen_out, "output .snm path")->required();

  // shared convert-style options
  ConvertArgs ca;
  auto add_convert_opts = [&](CLI::App* cmd, bool need_seed) {
    cmd->add_option("--model", ca.model, "built-in name or model .snm path");
    auto* s = cmd->add_option("--seed", ca.seed, "obfuscation seed");
    if (need_seed) s->required();
    cmd->add_option("--ratio", ca.ratio, "kernel expansion ratio");
    cmd->add_option("--mask-scale", ca.mask_scale, "boundary mask magnitude");
    cmd->add_option("--domain", ca.domain, "secret domain")
        ->check(CLI::IsMember({"continuous", "dyadic"}));
  };

  // convert
  std::string out_a = "part_a.snm", out_b = "part_b.snm";
  auto* conv = app.add_subcommand("convert", "split a model into two parts");
  add_convert_opts(conv, true);
  conv->add_option("--out-a", out_a, "outsourced half output path");
  conv->add_option("--out-b", out_b, "secure half output path");

  // infer
  std::string in_a, in_b, in_x, out_y, dump_view;
  uint64_t rand_seed = 1, mask_seed = 1;
  bool random_input = false;
  size_t budget = 64ull << 20;
  int rounds = 1;
  auto* inf = app.add_subcommand("infer", "run a split model");
  inf->add_option("--part-a", in_a, "outsourced half")->required();
  inf->add_option("--part-b", in_b, "secure half")->required();
  auto* xi = inf->add_option("--input", in_x, "input tensor .snm");
  inf->add_flag("--random-input", random_input, "draw a random input")
      ->excludes(xi);
  inf->add_option("--input-seed", rand_seed, "seed for --random-input");
  inf->add_option("--budget", budget, "secure memory budget in bytes");
  inf->add_option("--rounds", rounds, "mask rounds to run")
      ->check(CLI::PositiveNumber);
  inf->add_option("--mask-seed", mask_seed, "mask derivation seed");
  inf->add_option("--out", out_y, "write the output tensor here");
  inf->add_option("--dump-view", dump_view,
                  "write the adversary-visible trace summary (json)");

  // verify
  int trials = 100;
  double tolerance = 1e-4;
  uint64_t verify_seed = 1;
  std::string sabotage_arg;
  auto* ver = app.add_subcommand(
      "verify", "check the split against the original model");
  add_convert_opts(ver, true);
  ver->add_option("--trials", trials, "random inputs to compare");
  ver->add_option("--tolerance", tolerance, "output relative error bound");
  ver->add_option("--budget", budget, "secure memory budget in bytes");
  ver->add_option("--verify-seed", verify_seed, "input sampling seed");
  ver->add_option("--sabotage", sabotage_arg,
                  "inject a fault: scale:LAYER, perm:LAYER, or stale-unmask");

  // bench
  int reps = 20;
  auto* ben = app.add_subcommand("bench", "time split inference");
  add_convert_opts(ben, false);
  ben->add_option("--reps", reps, "timed repetitions")
      ->check(CLI::PositiveNumber);
  ben->add_option("--budget", budget, "secure memory budget in bytes");

  // attack-sim
  int preimages = 5;
  uint64_t sample_seed = 7;
  bool as_json = false;
  auto* atk = app.add_subcommand(
      "attack-sim", "enumerate exact preimages of the published weights");
  add_convert_opts(atk, false);
  atk->add_option("--preimages", preimages, "candidates per layer")
      ->check(CLI::PositiveNumber);
  atk->add_option("--sample-seed", sample_seed, "candidate sampling seed");
  atk->add_flag("--json", as_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_name, gen_seed, gen_out);
    if (conv->parsed()) return cmd_convert(ca, out_a, out_b);
    if (inf->parsed()) {
      if (!random_input && in_x.empty())
        throw InvalidParams("need --input or --random-input");
      return cmd_infer(in_a, in_b, in_x, rand_seed, random_input, budget,
                       rounds, mask_seed, out_y, dump_view);
    }
    if (ver->parsed())
      return cmd_verify(ca, trials, tolerance, budget, verify_seed,
                        sabotage_arg);
    if (ben->parsed()) return cmd_bench(ca, reps, budget);
    if (atk->parsed()) return cmd_attack_sim(ca, preimages, sample_seed, as_json);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
