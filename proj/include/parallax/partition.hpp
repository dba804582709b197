#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "parallax/cost_model.hpp"
#include "parallax/graph.hpp"

namespace parallax {

// A candidate delegate region: connected set of accelerator-capable,
// non-control-flow nodes, convex (collapsible without creating a cycle).
// Node indices ascending.
struct CandidateRegion {
  std::vector<int> nodes;
};

// Connected components of capable nodes grouped by alternating ready-closure
// waves: a capable wave drains every ready capable node plus the capable
// successors it readies; other nodes drain in the waves between. Wave order
// never decreases along an edge and same-wave regions cannot reach each
// other, so collapsing any subset of candidates preserves acyclicity; a
// component is split exactly where it must wait on outside work. O(V + E),
// deterministic for a given graph.
std::vector<CandidateRegion> enumerate_candidates(const Graph& g);

// Baseline partitioner used for the "post initial delegation" comparison:
// maximal contiguous runs of capable nodes in a deterministic topological
// execution order. This mirrors how naive framework delegation slices a
// model, weaving independent chains into serialized delegate segments.
// Contiguous segments of a topological order are always convex.
std::vector<CandidateRegion> naive_order_candidates(const Graph& g);

// Audit record per candidate, in enumeration order.
struct RegionDecision {
  std::vector<std::string> node_ids;
  RegionStats stats;
  bool accepted = false;
  RejectReason reason = RejectReason::none;
  std::string delegate_id;  // set when accepted
};

struct PartitionedGraph {
  Graph graph;  // rewritten: each accepted region is a single Delegate node
  std::vector<RegionDecision> audit;
  // Delegate node id -> member node ids of the original graph.
  std::unordered_map<std::string, std::vector<std::string>> delegate_members;
};

// Evaluates every candidate against the thresholds once, collapses accepted
// regions into Delegate nodes (device_support = accelerator only, region
// totals stored in attrs), drops region-internal tensors, and leaves rejected
// regions untouched. The rewritten graph stays a DAG and conserves nodes:
// every original node is either present or accounted to exactly one delegate.
PartitionedGraph prune_and_collapse(const Graph& g,
                                    const std::vector<CandidateRegion>& candidates,
                                    const DelegationThresholds& thresholds,
                                    const CostModelOptions& opt = {});

nlohmann::json audit_json(const std::vector<RegionDecision>& audit);

}  // namespace parallax
