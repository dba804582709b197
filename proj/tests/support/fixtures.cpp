#include "support/fixtures.hpp"

#include <filesystem>
#include <fstream>

#include "parallax/error.hpp"

namespace testsupport {

using parallax::DType;
using parallax::Graph;
using parallax::OpClass;

int GraphBuilder::tensor(const std::string& id, const std::vector<std::int64_t>& dims,
                         DType dt) {
  parallax::TensorDef td;
  td.id = id;
  td.dtype = dt;
  for (std::int64_t d : dims) {
    parallax::Dim dim;
    dim.size = d;
    td.shape.push_back(dim);
  }
  td.has_shape = true;
  int idx = static_cast<int>(g.tensors.size());
  g.tensors.push_back(std::move(td));
  tmap_.emplace(id, idx);
  return idx;
}

int GraphBuilder::tref(const std::string& id) const {
  auto it = tmap_.find(id);
  PX_CHECK(it != tmap_.end(), "fixture references undeclared tensor " + id);
  return it->second;
}

void GraphBuilder::node(const std::string& id, const std::string& op,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs,
                        nlohmann::json attrs, bool accel, bool control_flow) {
  parallax::Node n;
  n.id = id;
  n.op = op;
  n.op_class = parallax::classify_op(op);
  for (const std::string& t : inputs) n.inputs.push_back(tref(t));
  for (const std::string& t : outputs) n.outputs.push_back(tref(t));
  n.attrs = std::move(attrs);
  n.supports_accel = accel;
  n.control_flow = control_flow;
  g.nodes.push_back(std::move(n));
}

void GraphBuilder::mark_input(const std::string& tensor_id) {
  g.graph_inputs.push_back(tref(tensor_id));
}

void GraphBuilder::mark_output(const std::string& tensor_id) {
  g.graph_outputs.push_back(tref(tensor_id));
}

Graph GraphBuilder::finish() {
  g.finalize();
  return std::move(g);
}

Graph make_chain(int ops, std::uint64_t tensor_bytes) {
  PX_CHECK(ops >= 1 && tensor_bytes % 4 == 0, "chain fixture wants f32-sized tensors");
  const std::int64_t elems = static_cast<std::int64_t>(tensor_bytes / 4);
  GraphBuilder b;
  b.tensor("t0", {1, elems});
  b.mark_input("t0");
  for (int i = 1; i <= ops; ++i) b.tensor("t" + std::to_string(i), {1, elems});
  for (int i = 0; i < ops; ++i)
    b.node("n" + std::to_string(i), "ReLU", {"t" + std::to_string(i)},
           {"t" + std::to_string(i + 1)});
  b.mark_output("t" + std::to_string(ops));
  return b.finish();
}

Graph make_diamond() {
  GraphBuilder b;
  for (const char* t : {"x", "a_out", "b_out", "c_out", "d_out"})
    b.tensor(t, {1, 64});
  b.mark_input("x");
  b.node("A", "ReLU", {"x"}, {"a_out"});
  b.node("B", "GELU", {"a_out"}, {"b_out"});
  b.node("C", "Sigmoid", {"a_out"}, {"c_out"});
  b.node("D", "Add", {"b_out", "c_out"}, {"d_out"});
  b.mark_output("d_out");
  return b.finish();
}

Graph make_fat_diamond() {
  GraphBuilder b;
  b.tensor("x", {1, 64});
  b.mark_input("x");
  b.tensor("a_out", {1, 64});
  b.node("A", "ReLU", {"x"}, {"a_out"});
  for (char arm : {'b', 'c'}) {
    std::string prev = "a_out";
    for (int i = 0; i < 3; ++i) {
      std::string t = std::string(1, arm) + std::to_string(i) + "_out";
      b.tensor(t, {1, 64});
      b.node(std::string(1, arm) + std::to_string(i), i % 2 ? "GELU" : "Sigmoid",
             {prev}, {t});
      prev = t;
    }
  }
  b.tensor("d_out", {1, 64});
  b.node("D", "Add", {"b2_out", "c2_out"}, {"d_out"});
  b.mark_output("d_out");
  return b.finish();
}

Graph make_multi_branch(int branches, int ops_per_branch, int mat_dim) {
  GraphBuilder b;
  const std::int64_t d = mat_dim;
  b.tensor("x", {d, d});
  b.mark_input("x");
  b.tensor("split_out", {d, d});
  b.node("split", "ReLU", {"x"}, {"split_out"});
  std::vector<std::string> arm_ends;
  for (int a = 0; a < branches; ++a) {
    std::string prev = "split_out";
    for (int i = 0; i < ops_per_branch; ++i) {
      std::string tag = "a" + std::to_string(a) + "_" + std::to_string(i);
      b.tensor("w_" + tag, {d, d});
      b.mark_input("w_" + tag);
      b.tensor(tag + "_out", {d, d});
      b.node(tag, "MatMul", {prev, "w_" + tag}, {tag + "_out"});
      prev = tag + "_out";
    }
    arm_ends.push_back(prev);
  }
  b.tensor("y", {d, d});
  b.node("merge", "Add", arm_ends, {"y"});
  b.mark_output("y");
  return b.finish();
}

Graph make_fragmented_transformer(int blocks) {
  GraphBuilder b;
  const std::int64_t h = 256;
  b.tensor("x", {1, h});
  b.mark_input("x");

  std::string cur = "x";
  for (int i = 0; i < 4; ++i) {
    std::string t = "head" + std::to_string(i) + "_out";
    b.tensor(t, {1, h});
    b.node("head" + std::to_string(i), "ReLU", {cur}, {t});
    cur = t;
  }

  for (int k = 0; k < blocks; ++k) {
    const std::string s = std::to_string(k);
    for (const char* w : {"w_p1_", "w_p3_", "w_q1_", "w_q3_"}) {
      b.tensor(w + s, {h, h});
      b.mark_input(w + s);
    }
    for (const char* t :
         {"a_", "p1_", "p2_", "p3_", "q1_", "q2_", "q3_", "m_"})
      b.tensor(t + s + std::string("_out"), {1, h});

    // Declaration order interleaves the two arms so that an execution-order
    // segmenter welds {p1,q1} and {p3,q3} into delegate segments.
    b.node("a_" + s, "LayerNorm", {cur}, {"a_" + s + "_out"});
    b.node("p1_" + s, "MatMul", {"a_" + s + "_out", "w_p1_" + s},
           {"p1_" + s + "_out"}, nlohmann::json::object(), true);
    b.node("q1_" + s, "MatMul", {"a_" + s + "_out", "w_q1_" + s},
           {"q1_" + s + "_out"}, nlohmann::json::object(), true);
    b.node("p2_" + s, "GELU", {"p1_" + s + "_out"}, {"p2_" + s + "_out"});
    b.node("q2_" + s, "Softmax", {"q1_" + s + "_out"}, {"q2_" + s + "_out"});
    b.node("p3_" + s, "MatMul", {"p2_" + s + "_out", "w_p3_" + s},
           {"p3_" + s + "_out"}, nlohmann::json::object(), true);
    b.node("q3_" + s, "MatMul", {"q2_" + s + "_out", "w_q3_" + s},
           {"q3_" + s + "_out"}, nlohmann::json::object(), true);
    b.node("m_" + s, "Add", {"p3_" + s + "_out", "q3_" + s + "_out"},
           {"m_" + s + "_out"});
    cur = "m_" + s + "_out";
  }

  for (int i = 0; i < 5; ++i) {
    std::string t = "tail" + std::to_string(i) + "_out";
    b.tensor(t, {1, h});
    b.node("tail" + std::to_string(i), "ReLU", {cur}, {t});
    cur = t;
  }
  b.mark_output(cur);
  return b.finish();
}

Graph make_yolo_like() {
  GraphBuilder b;
  const std::int64_t c = 32, hw = 28;
  b.tensor("x", {1, c, hw, hw});
  b.mark_input("x");
  std::string cur = "x";
  nlohmann::json conv_attrs = {{"kernel", {3, 3}},
                               {"stride", {1, 1}},
                               {"padding", "same"},
                               {"filters", c}};
  for (int i = 0; i < 477; ++i) {
    std::string t = "c" + std::to_string(i) + "_out";
    b.tensor(t, {1, c, hw, hw});
    b.node("c" + std::to_string(i), "Conv2D", {cur}, {t}, conv_attrs, true);
    cur = t;
  }
  b.tensor("pool_out", {1, c, 1, 1});
  b.node("pool", "Mean", {cur}, {"pool_out"},
         {{"kernel", {hw, hw}}, {"stride", {1, 1}}, {"padding", "valid"}});
  b.tensor("flat_out", {1, c});
  b.node("flat", "Reshape", {"pool_out"}, {"flat_out"}, {{"shape", {1, c}}});
  b.tensor("y", {1, c});
  b.node("probs", "Softmax", {"flat_out"}, {"y"});
  b.mark_output("y");
  return b.finish();
}

Graph make_whisper_like() {
  std::mt19937 rng(0x627u);
  return random_dag(rng, 627, 0.45, 0.03, 2);
}

Graph make_acc_chain(int convs) {
  GraphBuilder b;
  const std::int64_t c = 64, hw = 56;
  b.tensor("x", {1, c, hw, hw});
  b.mark_input("x");
  std::string cur = "x";
  nlohmann::json conv_attrs = {{"kernel", {3, 3}},
                               {"stride", {1, 1}},
                               {"padding", "same"},
                               {"filters", c}};
  for (int i = 0; i < convs; ++i) {
    std::string t = "c" + std::to_string(i) + "_out";
    b.tensor(t, {1, c, hw, hw});
    b.node("c" + std::to_string(i), "Conv2D", {cur}, {t}, conv_attrs, true);
    cur = t;
  }
  b.mark_output(cur);
  return b.finish();
}

Graph random_dag(std::mt19937& rng, int n_nodes, double accel_frac,
                 double control_frac, int max_extra_inputs) {
  GraphBuilder b;
  b.tensor("t_in", {1, 64});
  b.mark_input("t_in");

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const char* unary_ops[] = {"ReLU", "GELU", "Sigmoid", "Tanh", "Softmax",
                             "LayerNorm"};
  const char* nary_ops[] = {"Add", "Mul"};

  // tensor ids by creation order; index 0 is the graph input.
  std::vector<std::string> pool = {"t_in"};
  for (int i = 0; i < n_nodes; ++i) {
    std::vector<std::string> inputs;
    // Recency-biased primary input keeps long runs; uniform picks add merges.
    if (coin(rng) < 0.7) {
      inputs.push_back(pool.back());
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      inputs.push_back(pool[pick(rng)]);
    }
    for (int e = 0; e < max_extra_inputs; ++e) {
      if (coin(rng) < 0.25) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        std::string t = pool[pick(rng)];
        if (std::find(inputs.begin(), inputs.end(), t) == inputs.end())
          inputs.push_back(t);
      }
    }
    std::string out = "t" + std::to_string(i);
    b.tensor(out, {1, 64});
    std::string op;
    if (inputs.size() == 1) {
      op = unary_ops[rng() % (sizeof(unary_ops) / sizeof(unary_ops[0]))];
    } else {
      op = nary_ops[rng() % (sizeof(nary_ops) / sizeof(nary_ops[0]))];
    }
    bool accel = coin(rng) < accel_frac;
    bool control = coin(rng) < control_frac;
    b.node("n" + std::to_string(i), op, inputs, {out}, nlohmann::json::object(),
           accel, control);
    pool.push_back(out);
  }

  Graph g = b.finish();
  for (std::size_t t = 0; t < g.tensors.size(); ++t)
    if (g.tensors[t].consumers.empty() && !g.is_graph_output(static_cast<int>(t)))
      g.graph_outputs.push_back(static_cast<int>(t));
  g.finalize();
  return g;
}

std::string write_graph_file(const Graph& g, const std::string& dir,
                             const std::string& name) {
  std::filesystem::create_directories(dir);
  std::string path = dir + "/" + name;
  std::ofstream out(path);
  PX_CHECK(static_cast<bool>(out), "cannot write fixture " + path);
  out << parallax::serialize_graph(g);
  return path;
}

}  // namespace testsupport
