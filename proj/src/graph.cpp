#include "parallax/graph.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

namespace parallax {

namespace {

using json = nlohmann::json;

const std::unordered_map<std::string, OpClass>& op_table() {
  static const std::unordered_map<std::string, OpClass> table = {
      {"Conv2D", OpClass::conv},
      {"DepthwiseConv2D", OpClass::conv},
      {"Conv", OpClass::conv},
      {"MatMul", OpClass::matmul},
      {"BatchMatMul", OpClass::matmul},
      {"FullyConnected", OpClass::matmul},
      {"Dense", OpClass::matmul},
      {"Gemm", OpClass::matmul},
      {"Add", OpClass::elementwise},
      {"Sub", OpClass::elementwise},
      {"Mul", OpClass::elementwise},
      {"Div", OpClass::elementwise},
      {"ReLU", OpClass::elementwise},
      {"Relu", OpClass::elementwise},
      {"LeakyRelu", OpClass::elementwise},
      {"GELU", OpClass::elementwise},
      {"Gelu", OpClass::elementwise},
      {"SiLU", OpClass::elementwise},
      {"Swish", OpClass::elementwise},
      {"HardSwish", OpClass::elementwise},
      {"Sigmoid", OpClass::elementwise},
      {"Tanh", OpClass::elementwise},
      {"Softmax", OpClass::elementwise},
      {"LayerNorm", OpClass::elementwise},
      {"Rsqrt", OpClass::elementwise},
      {"Sqrt", OpClass::elementwise},
      {"Exp", OpClass::elementwise},
      {"Neg", OpClass::elementwise},
      {"Abs", OpClass::elementwise},
      {"Pow", OpClass::elementwise},
      {"Minimum", OpClass::elementwise},
      {"Maximum", OpClass::elementwise},
      {"MaxPool2D", OpClass::pooling},
      {"MaxPool", OpClass::pooling},
      {"AveragePool2D", OpClass::pooling},
      {"AvgPool2D", OpClass::pooling},
      {"AvgPool", OpClass::pooling},
      {"GlobalAveragePool", OpClass::pooling},
      {"Mean", OpClass::pooling},
      {"Sum", OpClass::pooling},
      {"ReduceMean", OpClass::pooling},
      {"ReduceSum", OpClass::pooling},
      {"ReduceMax", OpClass::pooling},
      {"Reshape", OpClass::misc},
      {"Transpose", OpClass::misc},
      {"Concat", OpClass::misc},
      {"Split", OpClass::misc},
      {"Slice", OpClass::misc},
      {"StridedSlice", OpClass::misc},
      {"Pad", OpClass::misc},
      {"Gather", OpClass::misc},
      {"Embedding", OpClass::misc},
      {"Squeeze", OpClass::misc},
      {"Unsqueeze", OpClass::misc},
      {"ExpandDims", OpClass::misc},
      {"Cast", OpClass::misc},
      {"Quantize", OpClass::misc},
      {"Dequantize", OpClass::misc},
      {"Shape", OpClass::misc},
      {"Pack", OpClass::misc},
      {"Unpack", OpClass::misc},
      {"Identity", OpClass::misc},
      {"If", OpClass::misc},
      {"While", OpClass::misc},
      {"Delegate", OpClass::delegate_region},
  };
  return table;
}

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  fail(ErrorKind::parse, where + ": " + what);
}

std::int64_t require_positive_int(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 1)
    parse_fail(where, "expected a positive integer, got " + j.dump());
  return j.get<std::int64_t>();
}

Dim parse_dim(const json& j, const std::string& where) {
  Dim d;
  if (j.is_number_integer()) {
    d.size = require_positive_int(j, where);
    return d;
  }
  if (j.is_object()) {
    if (!j.contains("sym") || !j["sym"].is_string() || j["sym"].get<std::string>().empty())
      parse_fail(where, "symbolic dim needs a non-empty \"sym\" name");
    d.sym = j["sym"].get<std::string>();
    if (j.contains("max")) d.max = require_positive_int(j["max"], where + ".max");
    return d;
  }
  parse_fail(where, "malformed shape entry " + j.dump());
}

nlohmann::ordered_json dim_to_json(const Dim& d) {
  if (!d.symbolic()) return nlohmann::ordered_json(d.size);
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["sym"] = d.sym;
  if (d.max > 0) j["max"] = d.max;
  return j;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f16: return 2;
    case DType::i8: return 1;
    case DType::i32: return 4;
  }
  PX_CHECK(false, "unreachable dtype");
  return 0;
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f16: return "f16";
    case DType::i8: return "i8";
    case DType::i32: return "i32";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f16") return DType::f16;
  if (name == "i8") return DType::i8;
  if (name == "i32") return DType::i32;
  fail(ErrorKind::parse, "unknown dtype \"" + name + "\"");
}

OpClass classify_op(const std::string& op, bool* known) {
  const auto& table = op_table();
  auto it = table.find(op);
  if (known) *known = it != table.end();
  return it == table.end() ? OpClass::misc : it->second;
}

std::uint64_t shape_numel(const std::vector<Dim>& shape) {
  std::uint64_t n = 1;
  for (const Dim& d : shape) {
    PX_CHECK(d.bound() >= 1, "dimension without a usable bound");
    n *= static_cast<std::uint64_t>(d.bound());
  }
  return n;
}

int Graph::find_tensor(const std::string& id) const {
  auto it = tensor_index.find(id);
  return it == tensor_index.end() ? -1 : it->second;
}

int Graph::find_node(const std::string& id) const {
  auto it = node_index.find(id);
  return it == node_index.end() ? -1 : it->second;
}

bool Graph::is_graph_output(int tensor) const {
  return tensor >= 0 && tensor < static_cast<int>(output_flag_.size()) &&
         output_flag_[tensor];
}

std::vector<int> Graph::in_nodes(int node) const {
  std::vector<int> r;
  for (int t : nodes[node].inputs)
    if (tensors[t].producer >= 0) r.push_back(tensors[t].producer);
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

std::vector<int> Graph::out_nodes(int node) const {
  std::vector<int> r;
  for (int t : nodes[node].outputs)
    for (int c : tensors[t].consumers) r.push_back(c);
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

void Graph::finalize() {
  node_index.clear();
  tensor_index.clear();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensor_index.emplace(tensors[i].id, static_cast<int>(i)).second)
      fail(ErrorKind::validation, "duplicate tensor id \"" + tensors[i].id + "\"");
    tensors[i].producer = -1;
    tensors[i].consumers.clear();
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!node_index.emplace(nodes[i].id, static_cast<int>(i)).second)
      fail(ErrorKind::validation, "duplicate node id \"" + nodes[i].id + "\"");
  }
  const int ntensors = static_cast<int>(tensors.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int t : nodes[i].outputs) {
      PX_CHECK(t >= 0 && t < ntensors, "tensor index out of range");
      if (tensors[t].producer >= 0)
        fail(ErrorKind::validation,
             "tensor \"" + tensors[t].id + "\" produced by both \"" +
                 nodes[tensors[t].producer].id + "\" and \"" + nodes[i].id + "\"");
      tensors[t].producer = static_cast<int>(i);
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int t : nodes[i].inputs) {
      PX_CHECK(t >= 0 && t < ntensors, "tensor index out of range");
      auto& cs = tensors[t].consumers;
      if (std::find(cs.begin(), cs.end(), static_cast<int>(i)) == cs.end())
        cs.push_back(static_cast<int>(i));
    }
  }
  output_flag_.assign(tensors.size(), 0);
  for (int t : graph_outputs) {
    PX_CHECK(t >= 0 && t < ntensors, "graph output index out of range");
    output_flag_[t] = 1;
  }
}

Graph parse_graph(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::parse, "top level must be an object");

  Graph g;
  if (!doc.contains("tensors") || !doc["tensors"].is_array())
    fail(ErrorKind::parse, "missing \"tensors\" array");
  if (!doc.contains("nodes") || !doc["nodes"].is_array())
    fail(ErrorKind::parse, "missing \"nodes\" array");

  std::unordered_map<std::string, int> tidx;
  for (std::size_t i = 0; i < doc["tensors"].size(); ++i) {
    const json& jt = doc["tensors"][i];
    const std::string where = "tensors[" + std::to_string(i) + "]";
    if (!jt.is_object() || !jt.contains("id") || !jt["id"].is_string())
      parse_fail(where, "tensor needs a string \"id\"");
    TensorDef t;
    t.id = jt["id"].get<std::string>();
    if (jt.contains("dtype")) t.dtype = dtype_from_name(jt["dtype"].get<std::string>());
    if (jt.contains("shape")) {
      if (!jt["shape"].is_array()) parse_fail(where, "\"shape\" must be an array");
      for (std::size_t k = 0; k < jt["shape"].size(); ++k)
        t.shape.push_back(parse_dim(jt["shape"][k], where + ".shape[" + std::to_string(k) + "]"));
      t.has_shape = true;
    }
    if (!tidx.emplace(t.id, static_cast<int>(g.tensors.size())).second)
      parse_fail(where, "duplicate tensor id \"" + t.id + "\"");
    g.tensors.push_back(std::move(t));
  }

  auto tensor_ref = [&](const json& j, const std::string& where) {
    if (!j.is_string()) parse_fail(where, "tensor reference must be a string");
    auto it = tidx.find(j.get<std::string>());
    if (it == tidx.end())
      parse_fail(where, "dangling tensor reference \"" + j.get<std::string>() + "\"");
    return it->second;
  };

  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    const json& jn = doc["nodes"][i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!jn.is_object() || !jn.contains("id") || !jn["id"].is_string())
      parse_fail(where, "node needs a string \"id\"");
    Node n;
    n.id = jn["id"].get<std::string>();
    if (!jn.contains("op") || !jn["op"].is_string())
      parse_fail(where, "node needs a string \"op\"");
    n.op = jn["op"].get<std::string>();
    bool known = false;
    n.op_class = classify_op(n.op, &known);
    if (!known)
      g.warnings.push_back("unknown op \"" + n.op + "\" on node \"" + n.id +
                           "\" treated as misc");
    for (const char* key : {"inputs", "outputs"}) {
      if (!jn.contains(key)) continue;
      if (!jn[key].is_array()) parse_fail(where, std::string("\"") + key + "\" must be an array");
      auto& dst = std::string(key) == "inputs" ? n.inputs : n.outputs;
      for (std::size_t k = 0; k < jn[key].size(); ++k)
        dst.push_back(tensor_ref(jn[key][k], where + "." + key + "[" + std::to_string(k) + "]"));
    }
    if (jn.contains("attrs")) {
      if (!jn["attrs"].is_object()) parse_fail(where, "\"attrs\" must be an object");
      n.attrs = jn["attrs"];
    }
    if (jn.contains("device_support")) {
      if (!jn["device_support"].is_array())
        parse_fail(where, "\"device_support\" must be an array");
      n.supports_cpu = false;
      for (const json& d : jn["device_support"]) {
        if (!d.is_string()) parse_fail(where, "device names must be strings");
        const std::string dev = d.get<std::string>();
        if (dev == "cpu") n.supports_cpu = true;
        else if (dev == "accelerator") n.supports_accel = true;
        else parse_fail(where, "unknown device \"" + dev + "\"");
      }
    }
    if (!n.supports_cpu && n.op_class != OpClass::delegate_region)
      parse_fail(where, "device_support must include cpu");
    if (jn.contains("control_flow")) {
      if (!jn["control_flow"].is_boolean()) parse_fail(where, "\"control_flow\" must be a bool");
      n.control_flow = jn["control_flow"].get<bool>();
    }
    g.nodes.push_back(std::move(n));
  }

  for (const char* key : {"inputs", "outputs"}) {
    if (!doc.contains(key)) continue;
    if (!doc[key].is_array()) fail(ErrorKind::parse, std::string("\"") + key + "\" must be an array");
    auto& dst = std::string(key) == "inputs" ? g.graph_inputs : g.graph_outputs;
    for (std::size_t k = 0; k < doc[key].size(); ++k)
      dst.push_back(tensor_ref(doc[key][k], std::string(key) + "[" + std::to_string(k) + "]"));
  }

  g.finalize();
  return g;
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph(buf.str());
}

std::string serialize_graph(const Graph& g) {
  nlohmann::ordered_json doc;
  doc["schema"] = 1;
  auto& jtensors = doc["tensors"] = json::array();
  for (const TensorDef& t : g.tensors) {
    nlohmann::ordered_json jt;
    jt["id"] = t.id;
    jt["dtype"] = dtype_name(t.dtype);
    if (t.has_shape) {
      auto& js = jt["shape"] = json::array();
      for (const Dim& d : t.shape) js.push_back(dim_to_json(d));
    }
    jtensors.push_back(std::move(jt));
  }
  auto& jnodes = doc["nodes"] = json::array();
  for (const Node& n : g.nodes) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["op"] = n.op;
    auto ids = [&](const std::vector<int>& ts) {
      json a = json::array();
      for (int t : ts) a.push_back(g.tensors[t].id);
      return a;
    };
    jn["inputs"] = ids(n.inputs);
    jn["outputs"] = ids(n.outputs);
    if (!n.attrs.empty()) jn["attrs"] = n.attrs;
    json devs = json::array();
    if (n.supports_accel) devs.push_back("accelerator");
    if (n.supports_cpu) devs.push_back("cpu");
    jn["device_support"] = devs;
    if (n.control_flow) jn["control_flow"] = true;
    jnodes.push_back(std::move(jn));
  }
  auto tensor_ids = [&](const std::vector<int>& ts) {
    json a = json::array();
    for (int t : ts) a.push_back(g.tensors[t].id);
    return a;
  };
  doc["inputs"] = tensor_ids(g.graph_inputs);
  doc["outputs"] = tensor_ids(g.graph_outputs);
  return doc.dump(2) + "\n";
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write \"" + path + "\"");
  out << serialize_graph(g);
}

ValidationReport validate(const Graph& g) {
  ValidationReport r;

  for (std::size_t t = 0; t < g.tensors.size(); ++t) {
    const TensorDef& td = g.tensors[t];
    bool is_input = std::find(g.graph_inputs.begin(), g.graph_inputs.end(),
                              static_cast<int>(t)) != g.graph_inputs.end();
    if (td.producer < 0 && !is_input) {
      r.references_ok = false;
      r.issues.push_back({"references",
                          "tensor \"" + td.id + "\" has no producer and is not a graph input"});
    }
    if (td.producer >= 0 && is_input) {
      r.references_ok = false;
      r.issues.push_back({"references",
                          "graph input \"" + td.id + "\" is also produced by node \"" +
                              g.nodes[td.producer].id + "\""});
    }
    for (const Dim& d : td.shape) {
      if (d.symbolic() && d.max < 1) {
        r.shape_bounds_ok = false;
        r.issues.push_back({"shape_bounds",
                            "tensor \"" + td.id + "\" has symbolic dim \"" + d.sym +
                                "\" without a max bound"});
      }
    }
  }

  try {
    topological_order(g);
  } catch (const Error&) {
    r.acyclic = false;
    r.issues.push_back({"acyclic", "graph contains a cycle"});
  }
  return r;
}

std::vector<int> topological_order(const Graph& g) {
  const int n = static_cast<int>(g.nodes.size());
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> succ(n);
  for (int v = 0; v < n; ++v) {
    for (int p : g.in_nodes(v)) {
      succ[p].push_back(v);
      ++indeg[v];
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.push(v);
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int s : succ[v])
      if (--indeg[s] == 0) ready.push(s);
  }
  if (static_cast<int>(order.size()) != n)
    fail(ErrorKind::validation, "graph contains a cycle");
  return order;
}

namespace {

// Propagated output extents at max bound, or empty when the op class has no
// rule and the declared shape must stand.
std::vector<std::int64_t> propagate_shape(const Graph& g, const Node& n,
                                          const std::string& where) {
  auto in_bounds = [&](int idx) {
    const TensorDef& t = g.tensors[n.inputs[idx]];
    PX_CHECK(t.has_shape, "input shape unresolved at propagation time");
    std::vector<std::int64_t> b;
    for (const Dim& d : t.shape) {
      if (d.bound() < 1)
        fail(ErrorKind::validation,
             where + ": input \"" + t.id + "\" has an unbounded symbolic dim");
      b.push_back(d.bound());
    }
    return b;
  };

  auto attr_int_pair = [&](const char* key, std::vector<std::int64_t> fallback)
      -> std::vector<std::int64_t> {
    if (!n.attrs.contains(key)) return fallback;
    const auto& j = n.attrs[key];
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
      fail(ErrorKind::validation, where + ": attr \"" + std::string(key) + "\" must be [h, w]");
    return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
  };

  switch (n.op_class) {
    case OpClass::conv:
    case OpClass::pooling: {
      if (n.inputs.empty()) fail(ErrorKind::validation, where + ": needs an input");
      auto x = in_bounds(0);
      if (x.size() != 4)
        fail(ErrorKind::validation, where + ": expects a rank-4 NCHW input");
      if (!n.attrs.contains("kernel"))
        fail(ErrorKind::validation, where + ": missing required attr \"kernel\"");
      auto k = attr_int_pair("kernel", {});
      auto s = attr_int_pair("stride", {1, 1});
      std::string pad = n.attrs.value("padding", "same");
      auto out_extent = [&](std::int64_t in, std::int64_t kk, std::int64_t ss) {
        std::int64_t o = pad == "valid" ? (in - kk) / ss + 1 : (in + ss - 1) / ss;
        if (o < 1)
          fail(ErrorKind::validation, where + ": kernel larger than input extent");
        return o;
      };
      std::int64_t c_out = x[1];
      if (n.op_class == OpClass::conv) {
        if (n.attrs.contains("filters"))
          c_out = n.attrs["filters"].get<std::int64_t>();
        else if (n.op.find("Depthwise") == std::string::npos)
          fail(ErrorKind::validation, where + ": missing required attr \"filters\"");
      }
      return {x[0], c_out, out_extent(x[2], k[0], s[0]), out_extent(x[3], k[1], s[1])};
    }
    case OpClass::matmul: {
      if (n.inputs.size() < 2)
        fail(ErrorKind::validation, where + ": needs two inputs");
      auto a = in_bounds(0);
      auto b = in_bounds(1);
      if (a.size() < 2 || b.size() < 2)
        fail(ErrorKind::validation, where + ": inputs must be at least rank 2");
      if (b.size() != 2 && b.size() != a.size())
        fail(ErrorKind::validation, where + ": rhs must be rank 2 or match lhs rank");
      std::int64_t k_a = a[a.size() - 1];
      std::int64_t k_b = b[b.size() - 2];
      if (k_a != k_b)
        fail(ErrorKind::validation,
             where + ": contraction mismatch (" + std::to_string(k_a) + " vs " +
                 std::to_string(k_b) + ")");
      std::vector<std::int64_t> out(a.begin(), a.end() - 1);
      out.push_back(b[b.size() - 1]);
      return out;
    }
    case OpClass::elementwise: {
      if (n.inputs.empty()) fail(ErrorKind::validation, where + ": needs an input");
      auto x = in_bounds(0);
      for (std::size_t i = 1; i < n.inputs.size(); ++i) {
        if (in_bounds(static_cast<int>(i)) != x)
          fail(ErrorKind::validation,
               where + ": elementwise inputs disagree in shape");
      }
      return x;
    }
    case OpClass::misc: {
      if (n.op == "Reshape" && n.attrs.contains("shape")) {
        std::vector<std::int64_t> out;
        for (const auto& j : n.attrs["shape"]) {
          if (!j.is_number_integer() || j.get<std::int64_t>() < 1)
            fail(ErrorKind::validation, where + ": reshape dims must be positive");
          out.push_back(j.get<std::int64_t>());
        }
        std::uint64_t want = 1, have = 1;
        for (auto d : out) want *= static_cast<std::uint64_t>(d);
        if (!n.inputs.empty())
          for (auto d : in_bounds(0)) have *= static_cast<std::uint64_t>(d);
        if (!n.inputs.empty() && want != have)
          fail(ErrorKind::validation, where + ": reshape changes element count");
        return out;
      }
      return {};
    }
    case OpClass::delegate_region:
      return {};
  }
  return {};
}

}  // namespace

void infer_shapes(Graph& g) {
  for (int t : g.graph_inputs) {
    const TensorDef& td = g.tensors[t];
    if (!td.has_shape)
      fail(ErrorKind::validation, "graph input \"" + td.id + "\" has no shape");
    for (const Dim& d : td.shape)
      if (d.bound() < 1)
        fail(ErrorKind::validation,
             "graph input \"" + td.id + "\" has an unbounded symbolic dim");
  }

  for (int v : topological_order(g)) {
    Node& n = g.nodes[v];
    const std::string where = "node \"" + n.id + "\" (" + n.op + ")";
    std::vector<std::int64_t> expected = propagate_shape(g, n, where);
    for (std::size_t oi = 0; oi < n.outputs.size(); ++oi) {
      TensorDef& t = g.tensors[n.outputs[oi]];
      // Multi-output ops keep their declared shapes; the rule describes the
      // primary output only.
      bool primary = oi == 0 && !expected.empty();
      if (!t.has_shape) {
        if (!primary)
          fail(ErrorKind::validation,
               where + ": no shape rule for output \"" + t.id +
                   "\" and no declared shape");
        for (std::int64_t e : expected) t.shape.push_back(Dim{e, "", 0});
        t.has_shape = true;
      } else if (primary) {
        bool match = t.shape.size() == expected.size();
        for (std::size_t i = 0; match && i < expected.size(); ++i)
          match = t.shape[i].bound() == expected[i];
        if (!match)
          fail(ErrorKind::validation,
               where + ": declared shape of \"" + t.id +
                   "\" disagrees with propagated shape");
      }
      for (const Dim& d : t.shape)
        if (d.bound() < 1)
          fail(ErrorKind::validation,
               where + ": output \"" + t.id + "\" has an unbounded symbolic dim");
    }
  }

  for (TensorDef& t : g.tensors) {
    if (!t.has_shape)
      fail(ErrorKind::validation, "tensor \"" + t.id + "\" has no resolvable shape");
    t.byte_size = shape_numel(t.shape) * dtype_size(t.dtype);
    t.size_resolved = true;
  }
}

}  // namespace parallax
