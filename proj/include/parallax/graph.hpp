#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "parallax/error.hpp"

namespace parallax {

enum class DType : std::uint8_t { f32, f16, i8, i32 };

std::size_t dtype_size(DType t);
const char* dtype_name(DType t);
DType dtype_from_name(const std::string& name);

// One dimension of a tensor shape. Symbolic dims carry an upper bound and are
// planned at that bound; a symbolic dim without a bound (max == 0) survives
// parsing but fails the shape-bound validation check.
struct Dim {
  std::int64_t size = 0;  // concrete extent, 0 when symbolic
  std::string sym;        // symbol name, empty when concrete
  std::int64_t max = 0;   // declared bound for symbolic dims

  bool symbolic() const { return !sym.empty(); }
  std::int64_t bound() const { return symbolic() ? max : size; }
};

// Operator classes drive flop estimation and shape propagation. Unrecognized
// op names are accepted and classified misc, with a warning on the graph.
enum class OpClass : std::uint8_t {
  conv,
  matmul,
  elementwise,
  pooling,
  misc,
  delegate_region,
};

OpClass classify_op(const std::string& op, bool* known = nullptr);

struct TensorDef {
  std::string id;
  DType dtype = DType::f32;
  std::vector<Dim> shape;
  bool has_shape = false;

  // Filled in by Graph::finalize().
  int producer = -1;           // producing node index, -1 = graph input
  std::vector<int> consumers;  // distinct consumer node indices, first-use order

  std::uint64_t byte_size = 0;  // numel at max bound times dtype size
  bool size_resolved = false;
};

struct Node {
  std::string id;
  std::string op;
  OpClass op_class = OpClass::misc;
  std::vector<int> inputs;   // tensor indices, ordered
  std::vector<int> outputs;  // tensor indices, ordered
  nlohmann::json attrs = nlohmann::json::object();
  bool supports_cpu = true;
  bool supports_accel = false;
  bool control_flow = false;
};

struct Graph {
  std::vector<Node> nodes;
  std::vector<TensorDef> tensors;
  std::vector<int> graph_inputs;   // tensor indices
  std::vector<int> graph_outputs;  // tensor indices
  std::vector<std::string> warnings;

  std::unordered_map<std::string, int> node_index;
  std::unordered_map<std::string, int> tensor_index;

  int find_tensor(const std::string& id) const;
  int find_node(const std::string& id) const;
  bool is_graph_output(int tensor) const;

  // Distinct neighbor nodes, ascending. Graph inputs/outputs contribute none.
  std::vector<int> in_nodes(int node) const;
  std::vector<int> out_nodes(int node) const;

  // Rebuilds id maps and producer/consumer wiring. Rejects tensors with two
  // producers and dangling indices.
  void finalize();

 private:
  std::vector<char> output_flag_;
};

// Parses the canonical graph JSON:
//   {"tensors":[{"id","dtype","shape":[int|{"sym","max"}]}],
//    "nodes":[{"id","op","inputs","outputs","attrs","device_support","control_flow"}],
//    "inputs":[...], "outputs":[...]}
// device_support defaults to ["cpu"]; every non-Delegate node must support cpu.
// Malformed JSON, bad shapes, unknown dtypes and dangling references are parse
// errors naming the offending element.
Graph parse_graph(const std::string& text);
Graph load_graph(const std::string& path);

// Canonical, byte-stable serialization; parse_graph(serialize_graph(g)) equals
// g on all canonical fields.
std::string serialize_graph(const Graph& g);
void save_graph(const Graph& g, const std::string& path);

struct ValidationIssue {
  std::string check;
  std::string detail;
};

struct ValidationReport {
  bool acyclic = true;
  bool references_ok = true;
  bool shape_bounds_ok = true;
  std::vector<ValidationIssue> issues;
  bool ok() const { return acyclic && references_ok && shape_bounds_ok; }
};

ValidationReport validate(const Graph& g);

// Kahn order with ties broken by node declaration index; throws on cycles.
std::vector<int> topological_order(const Graph& g);

// Resolves every tensor's byte size, propagating shapes from graph inputs:
// conv/pool spatial arithmetic, matmul M x N, elementwise pass-through,
// reshape via attrs. Declared shapes are checked against propagated ones at
// max bound; ops without a rule keep their declared output shape, and it is
// an error when none was declared.
void infer_shapes(Graph& g);

std::uint64_t shape_numel(const std::vector<Dim>& shape);

}  // namespace parallax
