#include "parallax/branch_layer.hpp"

#include <algorithm>

namespace parallax {

namespace {

// Distinct in/out neighbor lists per node, one linear pass.
struct Adjacency {
  std::vector<std::vector<int>> in, out;

  explicit Adjacency(const Graph& g) {
    const int n = static_cast<int>(g.nodes.size());
    in.resize(n);
    out.resize(n);
    for (int v = 0; v < n; ++v) {
      for (int t : g.nodes[v].inputs) {
        int p = g.tensors[t].producer;
        if (p >= 0) in[v].push_back(p);
      }
      auto& iv = in[v];
      std::sort(iv.begin(), iv.end());
      iv.erase(std::unique(iv.begin(), iv.end()), iv.end());
      for (int p : iv) out[p].push_back(v);
    }
    // out lists fill in ascending v, already sorted and unique per producer.
  }
};

}  // namespace

std::vector<NodeLabel> classify_nodes(const Graph& g) {
  Adjacency adj(g);
  std::vector<NodeLabel> labels(g.nodes.size(), NodeLabel::sequential);
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    if (g.nodes[v].control_flow) {
      labels[v] = NodeLabel::split_merge;
      continue;
    }
    std::size_t din = std::max<std::size_t>(adj.in[v].size(), 1);
    std::size_t dout = std::max<std::size_t>(adj.out[v].size(), 1);
    if (din == 1 && dout == 1) labels[v] = NodeLabel::sequential;
    else if (din == 1) labels[v] = NodeLabel::splitter;
    else if (dout == 1) labels[v] = NodeLabel::merger;
    else labels[v] = NodeLabel::split_merge;
  }
  return labels;
}

std::vector<Branch> extract_branches(const Graph& g,
                                     const std::vector<NodeLabel>& labels,
                                     const std::vector<double>& node_macs,
                                     std::vector<int>* branch_of_node) {
  const int n = static_cast<int>(g.nodes.size());
  PX_CHECK(labels.size() == static_cast<std::size_t>(n) &&
               node_macs.size() == static_cast<std::size_t>(n),
           "labels/macs size mismatch");
  Adjacency adj(g);

  auto sole_pred = [&](int v) -> int {
    return adj.in[v].size() == 1 ? adj.in[v][0] : -1;
  };
  auto sole_succ = [&](int v) -> int {
    return adj.out[v].size() == 1 ? adj.out[v][0] : -1;
  };

  std::vector<Branch> branches;
  std::vector<int> owner(n, -1);
  std::vector<char> visited(n, 0);

  auto emit = [&](std::vector<int>&& members) {
    Branch b;
    b.id = static_cast<int>(branches.size());
    b.nodes = std::move(members);
    for (int m : b.nodes) {
      visited[m] = 1;
      owner[m] = b.id;
      b.macs += node_macs[m];
      if (g.nodes[m].op_class == OpClass::delegate_region) b.contains_delegate = true;
    }
    branches.push_back(std::move(b));
  };

  for (int v = 0; v < n; ++v) {
    if (visited[v]) continue;
    if (labels[v] != NodeLabel::sequential) {
      emit({v});
      continue;
    }
    // Rewind to the head of the sequential run, then collect forward. A
    // sequential predecessor's only consumer is this node, so the walk is a
    // unique path either way.
    int head = v;
    for (;;) {
      int p = sole_pred(head);
      if (p < 0 || labels[p] != NodeLabel::sequential || visited[p]) break;
      head = p;
    }
    std::vector<int> run;
    int u = head;
    for (;;) {
      run.push_back(u);
      int s = sole_succ(u);
      if (s < 0 || labels[s] != NodeLabel::sequential || visited[s]) break;
      u = s;
    }
    emit(std::move(run));
  }

  if (branch_of_node) *branch_of_node = std::move(owner);
  return branches;
}

std::vector<Layer> build_layers(const Graph& g, const std::vector<Branch>& branches,
                                const std::vector<int>& branch_of_node) {
  const int nb = static_cast<int>(branches.size());
  std::vector<std::vector<int>> succ(nb);
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    int bv = branch_of_node[v];
    for (int t : g.nodes[v].inputs) {
      int p = g.tensors[t].producer;
      if (p < 0) continue;
      int bp = branch_of_node[p];
      if (bp != bv) succ[bp].push_back(bv);
    }
  }
  std::vector<int> indeg(nb, 0);
  for (auto& s : succ) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (int b : s) ++indeg[b];
  }

  std::vector<Layer> layers;
  std::vector<int> wave;
  for (int b = 0; b < nb; ++b)
    if (indeg[b] == 0) wave.push_back(b);
  std::size_t placed = 0;
  while (!wave.empty()) {
    std::sort(wave.begin(), wave.end());
    Layer layer;
    layer.branches = wave;
    placed += wave.size();
    std::vector<int> next;
    for (int b : wave)
      for (int s : succ[b])
        if (--indeg[s] == 0) next.push_back(s);
    layers.push_back(std::move(layer));
    wave = std::move(next);
  }
  PX_CHECK(placed == static_cast<std::size_t>(nb), "branch layering left a cycle");
  return layers;
}

void refine(std::vector<Layer>& layers, const std::vector<Branch>& branches,
            const Graph& g, const RefineConfig& cfg) {
  (void)g;
  for (Layer& layer : layers) {
    layer.parallel_eligible = false;
    if (layer.branches.size() < 2) continue;

    bool sizes_ok = true;
    double fmin = 0.0, fmax = 0.0;
    bool have_f = false;
    for (int bi : layer.branches) {
      const Branch& b = branches[bi];
      bool delegate_singleton = b.contains_delegate && b.nodes.size() == 1;
      if (!delegate_singleton && b.nodes.size() <= cfg.min_branch_nodes) {
        sizes_ok = false;
        break;
      }
      if (b.macs > 0.0) {
        fmin = have_f ? std::min(fmin, b.macs) : b.macs;
        fmax = have_f ? std::max(fmax, b.macs) : b.macs;
        have_f = true;
      }
    }
    if (!sizes_ok) continue;
    if (have_f && fmax > cfg.balance_ratio * fmin) continue;
    layer.parallel_eligible = true;
  }
}

StructureReport PlanStructure::report() const {
  StructureReport r;
  for (const Branch& b : branches) r.node_count += b.nodes.size();
  r.branch_count = branches.size();
  r.layer_count = layers.size();
  for (const Layer& l : layers) {
    if (l.parallel_eligible) ++r.parallel_layer_count;
    r.max_branches_in_layer = std::max(r.max_branches_in_layer, l.branches.size());
  }
  return r;
}

PlanStructure analyze_structure(const Graph& g, const std::vector<double>& node_macs,
                                const RefineConfig& cfg) {
  PlanStructure s;
  s.labels = classify_nodes(g);
  s.branches = extract_branches(g, s.labels, node_macs, &s.branch_of_node);
  s.layers = build_layers(g, s.branches, s.branch_of_node);
  refine(s.layers, s.branches, g, cfg);
  return s;
}

}  // namespace parallax
