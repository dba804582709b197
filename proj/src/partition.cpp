#include "parallax/partition.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_map>

namespace parallax {

namespace {

bool capable(const Node& n) { return n.supports_accel && !n.control_flow; }

}  // namespace

std::vector<CandidateRegion> enumerate_candidates(const Graph& g) {
  const int n = static_cast<int>(g.nodes.size());

  // Distinct-predecessor adjacency (one entry per edge, both directions).
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  {
    std::vector<int> preds;
    for (int v = 0; v < n; ++v) {
      preds.clear();
      for (int t : g.nodes[v].inputs) {
        int p = g.tensors[t].producer;
        if (p >= 0) preds.push_back(p);
      }
      std::sort(preds.begin(), preds.end());
      preds.erase(std::unique(preds.begin(), preds.end()), preds.end());
      indeg[v] = static_cast<int>(preds.size());
      for (int p : preds) succ[p].push_back(v);
    }
  }

  // Execute the graph in alternating ready-closure waves: a capable wave
  // drains every ready capable node, including capable successors it readies
  // along the way; the other nodes drain in the waves between. Wave indices
  // never decrease along an edge, and a path between two capable nodes of the
  // same wave never leaves that wave, so grouping by wave keeps every subset
  // of candidates jointly collapsible without creating a cycle.
  std::vector<int> wave_of(n, -1);
  std::vector<int> cap_ready, cpu_ready;
  for (int v = 0; v < n; ++v)
    if (indeg[v] == 0) (capable(g.nodes[v]) ? cap_ready : cpu_ready).push_back(v);

  int drained = 0, wave = 0;
  bool cap_turn = true;
  while (drained < n) {
    std::vector<int>& bucket = cap_turn ? cap_ready : cpu_ready;
    if (bucket.empty()) {
      if ((cap_turn ? cpu_ready : cap_ready).empty())
        fail(ErrorKind::validation, "graph contains a cycle");
      cap_turn = !cap_turn;
      continue;
    }
    while (!bucket.empty()) {
      int v = bucket.back();
      bucket.pop_back();
      wave_of[v] = wave;
      ++drained;
      for (int u : succ[v])
        if (--indeg[u] == 0)
          (capable(g.nodes[u]) ? cap_ready : cpu_ready).push_back(u);
    }
    cap_turn = !cap_turn;
    ++wave;
  }

  // Connected components of capable nodes within one wave.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int v = 0; v < n; ++v) {
    if (!capable(g.nodes[v])) continue;
    for (int u : succ[v]) {
      if (!capable(g.nodes[u]) || wave_of[u] != wave_of[v]) continue;
      int a = find(v), b = find(u);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  std::vector<CandidateRegion> result;
  std::unordered_map<int, std::size_t> index_of_root;
  for (int v = 0; v < n; ++v) {
    if (!capable(g.nodes[v])) continue;
    auto [it, fresh] = index_of_root.emplace(find(v), result.size());
    if (fresh) result.emplace_back();
    result[it->second].nodes.push_back(v);
  }
  // Ascending node scan fills members ascending and regions by front node.
  return result;
}

std::vector<CandidateRegion> naive_order_candidates(const Graph& g) {
  std::vector<CandidateRegion> runs;
  std::vector<int> current;
  for (int v : topological_order(g)) {
    if (capable(g.nodes[v])) {
      current.push_back(v);
      continue;
    }
    if (!current.empty()) {
      runs.push_back(CandidateRegion{current});
      current.clear();
    }
  }
  if (!current.empty()) runs.push_back(CandidateRegion{current});
  for (auto& r : runs) std::sort(r.nodes.begin(), r.nodes.end());
  return runs;
}

PartitionedGraph prune_and_collapse(const Graph& g,
                                    const std::vector<CandidateRegion>& candidates,
                                    const DelegationThresholds& thresholds,
                                    const CostModelOptions& opt) {
  const int nnodes = static_cast<int>(g.nodes.size());
  const int ntensors = static_cast<int>(g.tensors.size());

  PartitionedGraph out;
  std::vector<int> region_of(nnodes, -1);  // accepted region index per node
  std::vector<int> accepted;               // candidate index per accepted region

  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const auto& cand = candidates[ci];
    RegionDecision dec;
    for (int v : cand.nodes) dec.node_ids.push_back(g.nodes[v].id);
    dec.stats = region_stats(g, cand.nodes, opt, /*check_connected=*/false);
    dec.reason = reject_reason(dec.stats, thresholds);
    dec.accepted = dec.reason == RejectReason::none;
    if (dec.accepted) {
      int r = static_cast<int>(accepted.size());
      for (int v : cand.nodes) {
        PX_CHECK(region_of[v] < 0, "node assigned to two accepted regions");
        region_of[v] = r;
      }
      accepted.push_back(static_cast<int>(ci));
    }
    out.audit.push_back(std::move(dec));
  }

  // Delegate ids must not clash with existing node ids.
  auto fresh_delegate_id = [&](int k) {
    std::string id = "delegate_" + std::to_string(k);
    while (g.node_index.count(id)) id += "_";
    return id;
  };

  // A tensor is internal when produced and consumed wholly inside one
  // accepted region and not a graph output; internal tensors disappear.
  std::vector<char> internal(ntensors, 0);
  for (int t = 0; t < ntensors; ++t) {
    const TensorDef& td = g.tensors[t];
    if (td.producer < 0 || g.is_graph_output(t)) continue;
    int r = region_of[td.producer];
    if (r < 0) continue;
    bool inside = true;
    for (int c : td.consumers)
      if (region_of[c] != r) inside = false;
    internal[t] = inside;
  }

  std::vector<int> tensor_map(ntensors, -1);
  for (int t = 0; t < ntensors; ++t) {
    if (internal[t]) continue;
    tensor_map[t] = static_cast<int>(out.graph.tensors.size());
    TensorDef td = g.tensors[t];
    td.producer = -1;
    td.consumers.clear();
    out.graph.tensors.push_back(std::move(td));
  }

  // Emit nodes in original order; a delegate replaces its region at the
  // position of the region's first member.
  std::vector<char> emitted(accepted.size(), 0);
  for (int v = 0; v < nnodes; ++v) {
    int r = region_of[v];
    if (r < 0) {
      Node n = g.nodes[v];
      for (int& t : n.inputs) t = tensor_map[t];
      for (int& t : n.outputs) t = tensor_map[t];
      for (int t : n.inputs) PX_CHECK(t >= 0, "kept node consumes a dropped tensor");
      for (int t : n.outputs) PX_CHECK(t >= 0, "kept node produces a dropped tensor");
      out.graph.nodes.push_back(std::move(n));
      continue;
    }
    if (emitted[r]) continue;
    emitted[r] = 1;
    const auto& members = candidates[accepted[r]].nodes;
    const RegionDecision& dec = out.audit[accepted[r]];

    Node d;
    d.id = fresh_delegate_id(r);
    d.op = "Delegate";
    d.op_class = OpClass::delegate_region;
    d.supports_cpu = false;
    d.supports_accel = true;
    d.attrs["macs"] = dec.stats.macs;
    d.attrs["boundary_bytes"] = dec.stats.boundary_bytes;
    d.attrs["node_count"] = dec.stats.node_count;

    std::set<int> seen_in, seen_out;
    for (int m : members) {
      for (int t : g.nodes[m].inputs) {
        const TensorDef& td = g.tensors[t];
        bool produced_inside = td.producer >= 0 && region_of[td.producer] == r;
        if (!produced_inside && seen_in.insert(t).second)
          d.inputs.push_back(tensor_map[t]);
      }
      for (int t : g.nodes[m].outputs) {
        if (internal[t]) continue;
        if (seen_out.insert(t).second) d.outputs.push_back(tensor_map[t]);
      }
    }
    out.graph.nodes.push_back(std::move(d));
    out.audit[accepted[r]].delegate_id = out.graph.nodes.back().id;
    out.delegate_members[out.graph.nodes.back().id] = dec.node_ids;
  }

  for (int t : g.graph_inputs) out.graph.graph_inputs.push_back(tensor_map[t]);
  for (int t : g.graph_outputs) out.graph.graph_outputs.push_back(tensor_map[t]);
  for (int t : out.graph.graph_inputs) PX_CHECK(t >= 0, "graph input dropped");
  for (int t : out.graph.graph_outputs) PX_CHECK(t >= 0, "graph output dropped");

  out.graph.warnings = g.warnings;
  out.graph.finalize();

  // Convex candidates collapse to a DAG; anything else is a bug here.
  try {
    topological_order(out.graph);
  } catch (const Error&) {
    fail(ErrorKind::internal, "collapse produced a cyclic graph");
  }

  // Conservation: every original node is either copied or accounted to
  // exactly one delegate.
  std::size_t collapsed = 0;
  for (int r : accepted) collapsed += candidates[r].nodes.size();
  std::size_t copied = out.graph.nodes.size() - accepted.size();
  PX_CHECK(copied + collapsed == g.nodes.size(), "node conservation");

  return out;
}

nlohmann::json audit_json(const std::vector<RegionDecision>& audit) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : audit) {
    nlohmann::json j;
    j["nodes"] = d.node_ids;
    j["node_count"] = d.stats.node_count;
    j["macs"] = d.stats.macs;
    j["boundary_bytes"] = d.stats.boundary_bytes;
    j["decision"] = d.accepted ? "accepted" : "rejected";
    if (!d.accepted) j["reason"] = reject_reason_name(d.reason);
    if (!d.delegate_id.empty()) j["delegate"] = d.delegate_id;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace parallax
