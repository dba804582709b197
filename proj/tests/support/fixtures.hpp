#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "parallax/graph.hpp"

namespace testsupport {

// In-memory graph assembly for fixtures; declare tensors first, then nodes.
struct GraphBuilder {
  parallax::Graph g;

  int tensor(const std::string& id, const std::vector<std::int64_t>& dims,
             parallax::DType dt = parallax::DType::f32);
  void node(const std::string& id, const std::string& op,
            const std::vector<std::string>& inputs,
            const std::vector<std::string>& outputs,
            nlohmann::json attrs = nlohmann::json::object(), bool accel = false,
            bool control_flow = false);
  void mark_input(const std::string& tensor_id);
  void mark_output(const std::string& tensor_id);
  parallax::Graph finish();

 private:
  std::unordered_map<std::string, int> tmap_;
  int tref(const std::string& id) const;
};

// Straight elementwise chain; every tensor is tensor_bytes long (f32 elems).
parallax::Graph make_chain(int ops, std::uint64_t tensor_bytes = 100);

// A -> {B, C} -> D with single-node arms.
parallax::Graph make_diamond();

// A -> {3-node arm, 3-node arm} -> D; the middle layer is parallel-eligible.
parallax::Graph make_fat_diamond();

// Splitter feeding `branches` equal arms of `ops_per_branch` square matmuls,
// merged by one Add. Branch times are equal and well above spawn overhead.
parallax::Graph make_multi_branch(int branches = 4, int ops_per_branch = 3,
                                  int mat_dim = 64);

// Interleaved two-arm transformer-ish blocks whose accelerator-capable
// matmuls are isolated singletons: component delegation rejects them all,
// while execution-order segmentation welds independent arms together.
// Node count = 4 + 8 * blocks + 5 (353 at the default 43 blocks).
parallax::Graph make_fragmented_transformer(int blocks = 43);

// 480 nodes: one 477-conv capable chain plus a 3-node CPU tail; the conv
// chain clears every delegation threshold and collapses to one node.
parallax::Graph make_yolo_like();

// 627-node seeded mixed DAG for partition/structure property tests.
parallax::Graph make_whisper_like();

// Short capable conv chain heavy enough to clear the delegation thresholds.
parallax::Graph make_acc_chain(int convs = 5);

// Random DAG of elementwise ops over a shared [1, 64] shape. Every node has
// a recency-biased primary input plus up to max_extra_inputs others.
parallax::Graph random_dag(std::mt19937& rng, int n_nodes, double accel_frac = 0.35,
                           double control_frac = 0.02, int max_extra_inputs = 2);

// Writes the graph under dir (created on demand) and returns the path.
std::string write_graph_file(const parallax::Graph& g, const std::string& dir,
                             const std::string& name);

}  // namespace testsupport
