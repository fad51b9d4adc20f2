#include "shadownet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "shadownet/error.hpp"

namespace shadownet {

static_assert(std::endian::native == std::endian::little,
              "container files are little-endian");

using json = nlohmann::ordered_json;

namespace {

constexpr uint32_t kFormatVersion = 1;
constexpr char kRngId[] = "philox4x32-10/v1";

uint64_t align64(uint64_t x) { return (x + 63) & ~uint64_t(63); }

json shape_json(const Shape& s) {
  json a = json::array();
  for (int i = 0; i < s.rank; ++i) a.push_back(s.d[size_t(i)]);
  return a;
}

Shape shape_from(const json& a) {
  if (!a.is_array() || a.size() > 4)
    throw IoError("bad shape in container header");
  Shape s;
  s.rank = int(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    s.d[i] = a[i].get<int>();
    if (s.d[i] < 0) throw IoError("bad shape in container header");
  }
  return s;
}

// Collects blob payloads while the header is being built; offsets are
// relative to the 64-byte-aligned data section base.
struct BlobWriter {
  json table = json::array();
  std::vector<std::vector<uint8_t>> payload;
  std::vector<uint64_t> offsets;
  uint64_t cursor = 0;

  int add(const char* dtype, const json& dims, const void* src, size_t bytes) {
    const uint64_t off = align64(cursor);
    json e;
    e["dtype"] = dtype;
    e["shape"] = dims;
    e["offset"] = off;
    e["bytes"] = bytes;
    table.push_back(std::move(e));
    std::vector<uint8_t> buf(bytes);
    if (bytes) std::memcpy(buf.data(), src, bytes);
    payload.push_back(std::move(buf));
    offsets.push_back(off);
    cursor = off + bytes;
    return int(table.size()) - 1;
  }

  int add_tensor(const TensorF& t) {
    return add("f32", shape_json(t.shape), t.v.data(),
               t.v.size() * sizeof(float));
  }

  int add_f64(const std::vector<double>& v) {
    json dims = json::array();
    dims.push_back(v.size());
    return add("f64", dims, v.data(), v.size() * sizeof(double));
  }
};

void write_frame(const std::string& path, const char* magic,
                 const json& header, const BlobWriter& bw) {
  const std::string h = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(magic, 4);
  const uint32_t ver = kFormatVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  const uint64_t hlen = h.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(h.data(), std::streamsize(h.size()));

  uint64_t pos = 16 + h.size();
  const uint64_t base = align64(pos);
  static const char zeros[64] = {};
  f.write(zeros, std::streamsize(base - pos));

  uint64_t cur = 0;
  for (size_t i = 0; i < bw.payload.size(); ++i) {
    f.write(zeros, std::streamsize(bw.offsets[i] - cur));
    f.write(reinterpret_cast<const char*>(bw.payload[i].data()),
            std::streamsize(bw.payload[i].size()));
    cur = bw.offsets[i] + bw.payload[i].size();
  }
  if (!f) throw IoError("write failed: '" + path + "'");
}

struct Frame {
  json header;
  std::vector<uint8_t> file;
  uint64_t base = 0;

  const json& blob_entry(int id) const {
    const json& blobs = header.at("blobs");
    if (id < 0 || size_t(id) >= blobs.size())
      throw IoError("blob id out of range");
    return blobs.at(size_t(id));
  }

  const uint8_t* blob_data(const json& e, size_t need) const {
    const uint64_t off = e.at("offset").get<uint64_t>();
    const uint64_t bytes = e.at("bytes").get<uint64_t>();
    if (bytes != need) throw IoError("blob size mismatch");
    if (base + off + bytes > file.size())
      throw IoError("blob outside container data section");
    return file.data() + base + off;
  }

  TensorF tensor(int id) const {
    const json& e = blob_entry(id);
    if (e.at("dtype").get<std::string>() != "f32")
      throw IoError("expected an f32 blob");
    TensorF t(shape_from(e.at("shape")));
    const uint8_t* p = blob_data(e, t.v.size() * sizeof(float));
    if (!t.v.empty()) std::memcpy(t.v.data(), p, t.v.size() * sizeof(float));
    return t;
  }

  std::vector<double> f64(int id) const {
    const json& e = blob_entry(id);
    if (e.at("dtype").get<std::string>() != "f64")
      throw IoError("expected an f64 blob");
    const Shape s = shape_from(e.at("shape"));
    std::vector<double> v(s.count());
    const uint8_t* p = blob_data(e, v.size() * sizeof(double));
    if (!v.empty()) std::memcpy(v.data(), p, v.size() * sizeof(double));
    return v;
  }
};

Frame read_frame(const std::string& path, const char* magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  Frame fr;
  fr.file.assign(std::istreambuf_iterator<char>(f),
                 std::istreambuf_iterator<char>());
  if (fr.file.size() < 16 || std::memcmp(fr.file.data(), magic, 4) != 0)
    throw IoError("'" + path + "' is not a " + std::string(magic, 4) +
                  " container");
  uint32_t ver = 0;
  std::memcpy(&ver, fr.file.data() + 4, 4);
  if (ver != kFormatVersion)
    throw IoError("'" + path + "': unsupported format version " +
                  std::to_string(ver));
  uint64_t hlen = 0;
  std::memcpy(&hlen, fr.file.data() + 8, 8);
  if (16 + hlen > fr.file.size())
    throw IoError("'" + path + "': truncated header");
  try {
    fr.header = json::parse(fr.file.begin() + 16,
                            fr.file.begin() + std::ptrdiff_t(16 + hlen));
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
  fr.base = align64(16 + hlen);
  return fr;
}

const char* padding_name(Padding p) {
  return p == Padding::same ? "same" : "valid";
}

Padding padding_from(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw IoError("unknown padding '" + s + "'");
}

json layer_json(const LayerSpec& n) {
  json e;
  e["kind"] = kind_name(n.kind);
  e["name"] = n.name;
  e["inputs"] = n.inputs;
  switch (n.kind) {
    case LayerKind::conv:
    case LayerKind::dwconv:
    case LayerKind::pwconv:
      e["stride"] = n.stride;
      e["padding"] = padding_name(n.padding);
      if (n.flatten_input) e["flatten"] = true;
      e["weights"] = n.weights;
      break;
    case LayerKind::linear_transform:
      e["weights"] = n.weights;
      break;
    case LayerKind::batchnorm:
      e["gamma"] = n.gamma;
      e["beta"] = n.beta;
      e["mean"] = n.mean;
      e["variance"] = n.variance;
      e["epsilon"] = double(n.epsilon);
      break;
    case LayerKind::avgpool:
    case LayerKind::maxpool:
      e["window"] = n.window;
      e["stride"] = n.stride;
      break;
    case LayerKind::shuffle_channel:
      e["perm"] = n.perm;
      if (n.scale >= 0) e["scale"] = n.scale;
      break;
    case LayerKind::push_mask:
    case LayerKind::pop_mask:
      e["mask_slot"] = n.mask_slot;
      break;
    case LayerKind::tee_shadow:
    case LayerKind::tee_merge:
      e["placeholder"] = n.placeholder;
      e["out_shape"] = shape_json(n.out_shape);
      break;
    case LayerKind::relu6:
    case LayerKind::softmax:
    case LayerKind::add:
      break;
  }
  return e;
}

LayerSpec layer_from(const json& e) {
  LayerSpec n;
  n.kind = kind_from_name(e.at("kind").get<std::string>());
  n.name = e.at("name").get<std::string>();
  n.inputs = e.at("inputs").get<std::vector<int>>();
  n.stride = e.value("stride", 1);
  n.padding = padding_from(e.value("padding", std::string("valid")));
  n.window = e.value("window", 0);
  n.flatten_input = e.value("flatten", false);
  n.epsilon = float(e.value("epsilon", 1e-3));
  n.weights = e.value("weights", -1);
  n.gamma = e.value("gamma", -1);
  n.beta = e.value("beta", -1);
  n.mean = e.value("mean", -1);
  n.variance = e.value("variance", -1);
  n.mask_slot = e.value("mask_slot", -1);
  if (e.contains("perm")) n.perm = e.at("perm").get<std::vector<int>>();
  n.scale = e.value("scale", -1);
  n.placeholder = e.value("placeholder", -1);
  if (e.contains("out_shape")) n.out_shape = shape_from(e.at("out_shape"));
  return n;
}

json graph_json(const ModelGraph& g, BlobWriter& bw) {
  json e;
  e["input"] = shape_json(g.input_shape);
  e["output"] = g.output;
  json ws = json::array();
  for (const TensorF& w : g.weights) ws.push_back(bw.add_tensor(w));
  e["weights"] = std::move(ws);
  json ns = json::array();
  for (const LayerSpec& n : g.nodes) ns.push_back(layer_json(n));
  e["nodes"] = std::move(ns);
  return e;
}

ModelGraph graph_from(const json& e, const Frame& fr) {
  ModelGraph g;
  g.input_shape = shape_from(e.at("input"));
  for (const json& w : e.at("weights")) g.weights.push_back(fr.tensor(w.get<int>()));
  for (const json& ne : e.at("nodes")) g.nodes.push_back(layer_from(ne));
  g.output = e.at("output").get<int>();
  g.validate();
  return g;
}

json slot_json(const MaskSlot& s) {
  json e;
  e["layer"] = s.layer;
  e["shape"] = shape_json(s.shape);
  e["scale"] = s.scale;
  e["op"] = kind_name(s.op);
  e["stride"] = s.stride;
  e["padding"] = padding_name(s.padding);
  if (s.flatten_input) e["flatten"] = true;
  e["orig_weights"] = s.orig_weights;
  e["u_shape"] = shape_json(s.u_shape);
  return e;
}

MaskSlot slot_from(const json& e) {
  MaskSlot s;
  s.layer = e.at("layer").get<std::string>();
  s.shape = shape_from(e.at("shape"));
  s.scale = e.at("scale").get<double>();
  s.op = kind_from_name(e.at("op").get<std::string>());
  s.stride = e.at("stride").get<int>();
  s.padding = padding_from(e.at("padding").get<std::string>());
  s.flatten_input = e.value("flatten", false);
  s.orig_weights = e.at("orig_weights").get<int>();
  s.u_shape = shape_from(e.at("u_shape"));
  return s;
}

json program_json(const SecureSubgraph& sg) {
  json e;
  e["id"] = sg.id;
  e["merge"] = sg.merge;
  e["name"] = sg.name;
  json ish = json::array();
  for (const Shape& s : sg.input_shapes) ish.push_back(shape_json(s));
  e["inputs"] = std::move(ish);
  json ns = json::array();
  for (const LayerSpec& n : sg.nodes) ns.push_back(layer_json(n));
  e["nodes"] = std::move(ns);
  e["output"] = sg.output;
  e["out_shape"] = shape_json(sg.out_shape);
  return e;
}

SecureSubgraph program_from(const json& e) {
  SecureSubgraph sg;
  sg.id = e.at("id").get<int>();
  sg.merge = e.at("merge").get<bool>();
  sg.name = e.at("name").get<std::string>();
  for (const json& s : e.at("inputs")) sg.input_shapes.push_back(shape_from(s));
  for (const json& ne : e.at("nodes")) sg.nodes.push_back(layer_from(ne));
  sg.output = e.at("output").get<int>();
  sg.out_shape = shape_from(e.at("out_shape"));
  const int cnt = int(sg.nodes.size());
  if (sg.output < 0 || sg.output >= cnt)
    throw IoError("program '" + sg.name + "': output id out of range");
  for (int i = 0; i < cnt; ++i)
    for (int in : sg.nodes[size_t(i)].inputs)
      if (in >= i || -1 - in >= int(sg.input_shapes.size()))
        throw IoError("program '" + sg.name + "': node input out of range");
  return sg;
}

json secret_json(const SecretRecord& r, BlobWriter& bw) {
  json e;
  e["layer"] = r.layer;
  e["depthwise"] = r.depthwise;
  e["orig_weights"] = r.orig_weights;
  if (r.conv) {
    const ConvSecret<float>& c = *r.conv;
    json ce;
    ce["n"] = c.n;
    ce["m"] = c.m;
    ce["lambdas"] = bw.add_f64(c.lambdas);
    ce["filler"] = c.filler.count() ? bw.add_tensor(c.filler) : -1;
    ce["index_c"] = c.index_c;
    ce["perm"] = c.perm;
    e["conv"] = std::move(ce);
  }
  if (r.dw) {
    const DwSecret<float>& d = *r.dw;
    json de;
    de["n"] = d.n;
    de["lambdas"] = bw.add_f64(d.lambdas);
    de["perm"] = d.perm;
    e["dw"] = std::move(de);
  }
  return e;
}

SecretRecord secret_from(const json& e, const Frame& fr) {
  SecretRecord r;
  r.layer = e.at("layer").get<std::string>();
  r.depthwise = e.at("depthwise").get<bool>();
  r.orig_weights = e.at("orig_weights").get<int>();
  if (e.contains("conv")) {
    const json& ce = e.at("conv");
    ConvSecret<float> c;
    c.n = ce.at("n").get<int>();
    c.m = ce.at("m").get<int>();
    c.lambdas = fr.f64(ce.at("lambdas").get<int>());
    const int fid = ce.at("filler").get<int>();
    if (fid >= 0) c.filler = fr.tensor(fid);
    c.index_c = ce.at("index_c").get<std::vector<int>>();
    c.perm = ce.at("perm").get<std::vector<int>>();
    r.conv = std::move(c);
  }
  if (e.contains("dw")) {
    const json& de = e.at("dw");
    DwSecret<float> d;
    d.n = de.at("n").get<int>();
    d.lambdas = fr.f64(de.at("lambdas").get<int>());
    d.perm = de.at("perm").get<std::vector<int>>();
    r.dw = std::move(d);
  }
  return r;
}

void save_graph_container(const std::string& path, const char* container,
                          const ModelGraph& g) {
  BlobWriter bw;
  json h;
  h["container"] = container;
  h["format"] = kFormatVersion;
  h["rng"] = kRngId;
  h["graph"] = graph_json(g, bw);
  h["blobs"] = bw.table;
  write_frame(path, "SNM1", h, bw);
}

Frame open_container(const std::string& path, const char* container) {
  Frame fr = read_frame(path, "SNM1");
  try {
    const std::string kind = fr.header.at("container").get<std::string>();
    if (kind != container)
      throw IoError("'" + path + "' holds a '" + kind + "' container, not '" +
                    container + "'");
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
  return fr;
}

}  // namespace

void save_model(const std::string& path, const ModelGraph& g) {
  g.validate();
  save_graph_container(path, "model", g);
}

ModelGraph load_model(const std::string& path) {
  const Frame fr = open_container(path, "model");
  try {
    return graph_from(fr.header.at("graph"), fr);
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
}

void save_part_a(const std::string& path, const PartA& a) {
  a.graph.validate();
  save_graph_container(path, "part-a", a.graph);
}

PartA load_part_a(const std::string& path) {
  const Frame fr = open_container(path, "part-a");
  try {
    PartA a;
    a.graph = graph_from(fr.header.at("graph"), fr);
    return a;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
}

void save_part_b(const std::string& path, const PartB& b) {
  BlobWriter bw;
  json h;
  h["container"] = "part-b";
  h["format"] = kFormatVersion;
  h["rng"] = kRngId;
  h["input"] = shape_json(b.input_shape);
  h["ratio"] = b.ratio;
  h["seed"] = b.seed;
  json ts = json::array();
  for (const TensorF& t : b.tensors) ts.push_back(bw.add_tensor(t));
  h["tensors"] = std::move(ts);
  json ps = json::array();
  for (const SecureSubgraph& sg : b.programs) ps.push_back(program_json(sg));
  h["programs"] = std::move(ps);
  json ss = json::array();
  for (const MaskSlot& s : b.mask_slots) ss.push_back(slot_json(s));
  h["mask_slots"] = std::move(ss);
  json rs = json::array();
  for (const SecretRecord& r : b.secrets) rs.push_back(secret_json(r, bw));
  h["secrets"] = std::move(rs);
  h["blobs"] = bw.table;
  write_frame(path, "SNM1", h, bw);
}

PartB load_part_b(const std::string& path) {
  const Frame fr = open_container(path, "part-b");
  try {
    PartB b;
    b.input_shape = shape_from(fr.header.at("input"));
    b.ratio = fr.header.at("ratio").get<double>();
    b.seed = fr.header.at("seed").get<uint64_t>();
    for (const json& t : fr.header.at("tensors"))
      b.tensors.push_back(fr.tensor(t.get<int>()));
    for (const json& p : fr.header.at("programs"))
      b.programs.push_back(program_from(p));
    for (const json& s : fr.header.at("mask_slots"))
      b.mask_slots.push_back(slot_from(s));
    for (const json& r : fr.header.at("secrets"))
      b.secrets.push_back(secret_from(r, fr));
    return b;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
}

void save_tensor(const std::string& path, const TensorF& t) {
  BlobWriter bw;
  json h;
  h["container"] = "tensor";
  h["format"] = kFormatVersion;
  h["tensor"] = bw.add_tensor(t);
  h["blobs"] = bw.table;
  write_frame(path, "SNT1", h, bw);
}

TensorF load_tensor(const std::string& path) {
  const Frame fr = read_frame(path, "SNT1");
  try {
    return fr.tensor(fr.header.at("tensor").get<int>());
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
}

std::string container_kind(const std::string& path) {
  {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    char magic[4] = {};
    if (f.read(magic, 4) && std::memcmp(magic, "SNT1", 4) == 0)
      return "tensor";
  }
  const Frame fr = read_frame(path, "SNM1");
  try {
    return fr.header.at("container").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("'" + path + "': malformed header: " + ex.what());
  }
}

}  // namespace shadownet
