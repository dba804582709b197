#pragma once

#include <cstdint>
#include <vector>

#include "parallax/graph.hpp"

namespace parallax {

// Structural role of a node, from its distinct-neighbor degrees. Sources and
// sinks count as degree 1 on their missing side; control-flow nodes are
// forced to split_merge so they never join a branch.
enum class NodeLabel : std::uint8_t { sequential, splitter, merger, split_merge };

std::vector<NodeLabel> classify_nodes(const Graph& g);

struct Branch {
  int id = 0;
  std::vector<int> nodes;  // a path in the graph, in dataflow order
  double macs = 0.0;
  bool contains_delegate = false;
};

struct Layer {
  std::vector<int> branches;  // ascending branch id
  bool parallel_eligible = false;
};

struct RefineConfig {
  // A layer is parallel-eligible only when every branch has strictly more
  // nodes than this; single-node delegate branches are exempt (they stand
  // for whole collapsed regions).
  std::size_t min_branch_nodes = 2;
  // Max allowed work imbalance F_max / F_min across a layer's branches;
  // zero-work branches ride along without entering the ratio.
  double balance_ratio = 1.5;
  std::size_t max_threads = 6;
};

struct StructureReport {
  std::size_t node_count = 0;
  std::size_t branch_count = 0;
  std::size_t layer_count = 0;
  std::size_t parallel_layer_count = 0;
  std::size_t max_branches_in_layer = 0;
};

struct PlanStructure {
  std::vector<NodeLabel> labels;
  std::vector<Branch> branches;
  std::vector<int> branch_of_node;
  std::vector<Layer> layers;

  StructureReport report() const;
};

// Maximal runs of sequential nodes become branches; every splitter, merger
// and split_merge node is a singleton branch. Runs are collected from their
// heads, so branch contents do not depend on traversal order. node_macs is
// indexed by node and feeds each branch's work total.
std::vector<Branch> extract_branches(const Graph& g,
                                     const std::vector<NodeLabel>& labels,
                                     const std::vector<double>& node_macs,
                                     std::vector<int>* branch_of_node);

// Dependency waves over the branch DAG (duplicate edges deduplicated):
// a branch lands in the first layer after all of its producers' layers, so
// branches sharing a layer are mutually unreachable.
std::vector<Layer> build_layers(const Graph& g, const std::vector<Branch>& branches,
                                const std::vector<int>& branch_of_node);

// Marks layers parallel-eligible per RefineConfig: at least two branches,
// the node-count rule, and the work-balance ratio.
void refine(std::vector<Layer>& layers, const std::vector<Branch>& branches,
            const Graph& g, const RefineConfig& cfg);

PlanStructure analyze_structure(const Graph& g, const std::vector<double>& node_macs,
                                const RefineConfig& cfg = {});

}  // namespace parallax
