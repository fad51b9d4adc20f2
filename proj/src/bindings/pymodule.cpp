#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "shadownet/analysis.hpp"
#include "shadownet/convert.hpp"
#include "shadownet/error.hpp"
#include "shadownet/models.hpp"
#include "shadownet/ops.hpp"
#include "shadownet/runtime.hpp"
#include "shadownet/serialize.hpp"

namespace py = pybind11;
using namespace shadownet;

namespace {

using NpF = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorF np_to_tensor(const NpF& a) {
  int rank = int(a.ndim());
  if (rank < 1 || rank > 4)
    throw InvalidParams("expected a 1- to 4-d float array");
  Shape s;
  s.rank = rank;
  for (int i = 0; i < rank; ++i) {
    auto d = a.shape(i);
    if (d <= 0 || d > 1 << 24) throw InvalidParams("bad array dimension");
    s.d[size_t(i)] = int(d);
  }
  TensorF t(s);
  std::memcpy(t.v.data(), a.data(), sizeof(float) * size_t(a.size()));
  return t;
}

py::array tensor_to_np(const TensorF& t) {
  std::vector<py::ssize_t> dims;
  for (int i = 0; i < t.shape.rank; ++i)
    dims.push_back(t.shape.d[size_t(i)]);
  py::array_t<float> a(dims);
  std::memcpy(a.mutable_data(), t.v.data(), sizeof(float) * t.v.size());
  return a;
}

py::tuple shape_tuple(const Shape& s) {
  py::tuple t(s.rank);
  for (int i = 0; i < s.rank; ++i) t[size_t(i)] = s.d[size_t(i)];
  return t;
}

py::dict view_to_dict(const AdversaryView& v) {
  py::dict d;
  d["input"] = tensor_to_np(v.input);
  d["output"] = tensor_to_np(v.output);
  py::list recs;
  for (const BoundaryRecord& r : v.records) {
    py::dict rd;
    rd["seq"] = r.seq;
    rd["layer"] = r.layer;
    rd["masked"] = r.masked;
    rd["tensor"] = tensor_to_np(r.tensor);
    recs.append(rd);
  }
  d["records"] = recs;
  py::dict w;
  for (const auto& kv : v.weights) w[py::str(kv.first)] = tensor_to_np(kv.second);
  d["weights"] = w;
  return d;
}

}  // namespace

PYBIND11_MODULE(_shadownet, mod) {
  mod.doc() = "split-CNN obfuscation toolchain";

  py::register_exception<Error>(mod, "ShadownetError");

  py::enum_<SecretDomain>(mod, "SecretDomain")
      .value("continuous", SecretDomain::continuous)
      .value("dyadic", SecretDomain::dyadic);

  py::class_<ObfuscationParams>(mod, "ObfuscationParams")
      .def(py::init([](double ratio, double scalar_bound, double scalar_floor,
                       double mask_scale, uint64_t seed, SecretDomain domain) {
             ObfuscationParams p;
             p.ratio = ratio;
             p.scalar_bound = scalar_bound;
             p.scalar_floor = scalar_floor;
             p.mask_scale = mask_scale;
             p.seed = seed;
             p.domain = domain;
             p.validate();
             return p;
           }),
           py::arg("ratio") = 1.2, py::arg("scalar_bound") = 1.0,
           py::arg("scalar_floor") = 0.05, py::arg("mask_scale") = 1.0,
           py::arg("seed") = 0, py::arg("domain") = SecretDomain::continuous)
      .def_readwrite("ratio", &ObfuscationParams::ratio)
      .def_readwrite("scalar_bound", &ObfuscationParams::scalar_bound)
      .def_readwrite("scalar_floor", &ObfuscationParams::scalar_floor)
      .def_readwrite("mask_scale", &ObfuscationParams::mask_scale)
      .def_readwrite("seed", &ObfuscationParams::seed)
      .def_readwrite("domain", &ObfuscationParams::domain);

  py::class_<ModelGraph>(mod, "ModelGraph")
      .def_property_readonly(
          "input_shape",
          [](const ModelGraph& g) { return shape_tuple(g.input_shape); })
      .def_property_readonly("layers",
                             [](const ModelGraph& g) {
                               std::vector<std::string> out;
                               for (const auto& n : g.nodes)
                                 out.push_back(n.name);
                               return out;
                             })
      .def("eval",
           [](const ModelGraph& g, const NpF& x) {
             return tensor_to_np(eval_graph(g, np_to_tensor(x)));
           })
      .def("__len__", [](const ModelGraph& g) { return g.nodes.size(); });

  py::class_<PartA>(mod, "PartA").def_property_readonly(
      "graph", [](const PartA& a) { return a.graph; });

  py::class_<PartB>(mod, "PartB")
      .def_property_readonly("programs",
                             [](const PartB& b) { return b.programs.size(); })
      .def_property_readonly(
          "mask_slots", [](const PartB& b) { return b.mask_slots.size(); })
      .def_property_readonly("seed", [](const PartB& b) { return b.seed; })
      .def_property_readonly("ratio", [](const PartB& b) { return b.ratio; });

  mod.def("model_names", [] { return models::names(); });
  mod.def(
      "build_model",
      [](const std::string& name, uint64_t seed) { return models::by_name(name, seed); },
      py::arg("name"), py::arg("seed") = 0);

  mod.def("expanded_kernel_count", &expanded_kernel_count, py::arg("n"),
          py::arg("ratio"));

  mod.def(
      "convert_model",
      [](const ModelGraph& g, const ObfuscationParams& p) {
        CollapsedModel cm = convert_step2(convert_step1(g, p));
        PartA a;
        PartB b;
        split_model(cm, a, b);
        return py::make_tuple(std::move(a), std::move(b));
      },
      py::arg("model"), py::arg("params"));

  mod.def("save_model", &save_model);
  mod.def("load_model", &load_model);
  mod.def("save_part_a", &save_part_a);
  mod.def("load_part_a", &load_part_a);
  mod.def("save_part_b", &save_part_b);
  mod.def("load_part_b", &load_part_b);
  mod.def("save_tensor", [](const std::string& path, const NpF& x) {
    save_tensor(path, np_to_tensor(x));
  });
  mod.def("load_tensor",
          [](const std::string& path) { return tensor_to_np(load_tensor(path)); });
  mod.def("container_kind", &container_kind);

  // Reference kernels, mostly for cross-checking against numpy.
  mod.def(
      "conv2d",
      [](const NpF& x, const NpF& w, int stride, const std::string& padding) {
        Padding p = padding == "same" ? Padding::same : Padding::valid;
        return tensor_to_np(ops::conv2d(np_to_tensor(x), np_to_tensor(w), stride, p));
      },
      py::arg("x"), py::arg("w"), py::arg("stride") = 1,
      py::arg("padding") = "valid");
  mod.def("relu6", [](const NpF& x) {
    TensorF t = np_to_tensor(x);
    return tensor_to_np(ops::relu6(t));
  });
  mod.def("softmax", [](const NpF& x) {
    TensorF t = np_to_tensor(x);
    return tensor_to_np(ops::softmax(t));
  });

  py::class_<Session>(mod, "Session")
      .def(py::init<>())
      .def(
          "init",
          [](Session& s, const PartA& a, const PartB& b, size_t budget) {
            s.init(a, PartB(b), budget);
          },
          py::arg("part_a"), py::arg("part_b"),
          py::arg("budget") = size_t(64) << 20)
      .def("round_begin", &Session::round_begin, py::arg("mask_seed"),
           py::arg("round"))
      .def(
          "infer",
          [](Session& s, const NpF& x, bool record_view) -> py::object {
            TensorF t = np_to_tensor(x);
            if (!record_view) return tensor_to_np(s.infer(t));
            AdversaryView v;
            py::array y = tensor_to_np(s.infer(t, &v));
            return py::make_tuple(y, view_to_dict(v));
          },
          py::arg("x"), py::arg("record_view") = false)
      .def_property_readonly("masked_layers",
                             [](const Session& s) {
                               return std::vector<std::string>(
                                   s.masked_layers().begin(),
                                   s.masked_layers().end());
                             })
      .def_property_readonly("stats", [](Session& s) {
        const MemoryStats& st = s.secure().stats();
        py::dict d;
        d["tensor_bytes"] = st.tensor_bytes;
        d["activation_bytes"] = st.activation_bytes;
        d["footprint"] = st.footprint();
        d["max_act_floats"] = st.max_act_floats;
        return d;
      });

  mod.def(
      "verify_model",
      [](const ModelGraph& g, const PartA& a, const PartB& b, int trials,
         double tolerance, size_t budget, uint64_t seed, bool stale_unmask) {
        VerifyOptions opt;
        opt.trials = trials;
        opt.tolerance = tolerance;
        opt.budget_bytes = budget;
        opt.seed = seed;
        opt.stale_unmask = stale_unmask;
        VerifyReport r = verify_model(g, a, b, opt);
        py::dict d;
        d["ok"] = r.ok;
        d["trials"] = r.trials;
        d["max_eta"] = r.max_eta;
        d["first_bad_layer"] = r.first_bad_layer;
        d["bad_eta"] = r.bad_eta;
        return d;
      },
      py::arg("model"), py::arg("part_a"), py::arg("part_b"),
      py::arg("trials") = 25, py::arg("tolerance") = 1e-4,
      py::arg("budget") = size_t(64) << 20, py::arg("seed") = 1,
      py::arg("stale_unmask") = false);

  mod.def("count_equivalent_params",
          [](const ModelGraph& g, double ratio) {
            ParamCounts c = count_equivalent_params(g, ratio);
            return py::make_tuple(c.victim, c.adversary);
          });
  mod.def("witness_class_count", &witness_class_count, py::arg("m"),
          py::arg("k"));

  mod.def(
      "audit_view",
      [](const py::dict& view, const ModelGraph& g, double threshold) {
        AdversaryView v;
        v.input = np_to_tensor(view["input"].cast<NpF>());
        v.output = np_to_tensor(view["output"].cast<NpF>());
        for (const auto& item : view["records"].cast<py::list>()) {
          py::dict rd = item.cast<py::dict>();
          BoundaryRecord r;
          r.seq = rd["seq"].cast<int>();
          r.layer = rd["layer"].cast<std::string>();
          r.masked = rd["masked"].cast<bool>();
          r.tensor = np_to_tensor(rd["tensor"].cast<NpF>());
          v.records.push_back(std::move(r));
        }
        for (const auto& item : view["weights"].cast<py::dict>())
          v.weights.emplace_back(item.first.cast<std::string>(),
                                 np_to_tensor(item.second.cast<NpF>()));
        AuditReport rep = audit_view(v, g, threshold);
        py::dict d;
        d["ok"] = rep.ok();
        d["masked_ok"] = rep.masked_ok;
        d["unmasked_ok"] = rep.unmasked_ok;
        d["verbatim_ok"] = rep.verbatim_ok;
        d["min_masked_eta"] = rep.min_masked_eta;
        return d;
      },
      py::arg("view"), py::arg("model"), py::arg("threshold") = 1e-2);
}
