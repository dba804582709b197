#include "parallax/cost_model.hpp"

#include <algorithm>
#include <limits>
#include <unordered_set>

namespace parallax {

void check_params(const CostModelParams& p) {
  if (p.dispatch_latency_sec <= 0 || p.acc_macs_per_sec <= 0 ||
      p.cpu_macs_per_sec <= 0 || p.mem_bytes_per_sec <= 0)
    fail(ErrorKind::validation, "device profile rates must be positive");
  if (p.acc_macs_per_sec <= p.cpu_macs_per_sec)
    fail(ErrorKind::validation,
         "accelerator throughput must exceed cpu throughput");
}

double RegionStats::bytes_per_mac() const {
  if (macs <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(boundary_bytes) / macs;
}

DelegationThresholds accept_all_thresholds() {
  return DelegationThresholds{1, 0.0, std::numeric_limits<double>::infinity()};
}

ThresholdDerivation derive_thresholds(const CostModelParams& p,
                                      const DelegationThresholds& relax) {
  check_params(p);
  ThresholdDerivation d;
  d.compute_bound_macs = p.dispatch_latency_sec * p.cpu_macs_per_sec;
  d.memory_bound_bytes_per_mac = p.mem_bytes_per_sec / p.acc_macs_per_sec;
  d.operational = relax;
  return d;
}

namespace {

std::pair<std::int64_t, std::int64_t> attr_kernel(const Node& n, const std::string& where) {
  if (!n.attrs.contains("kernel"))
    fail(ErrorKind::validation, where + ": missing required attr \"kernel\"");
  const auto& j = n.attrs["kernel"];
  if (!j.is_array() || j.size() != 2)
    fail(ErrorKind::validation, where + ": attr \"kernel\" must be [h, w]");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

std::int64_t bound_at(const Graph& g, int tensor, std::size_t dim) {
  const TensorDef& t = g.tensors[tensor];
  PX_CHECK(t.has_shape && dim < t.shape.size(), "tensor rank too small");
  return t.shape[dim].bound();
}

std::uint64_t numel_of(const Graph& g, int tensor) {
  return shape_numel(g.tensors[tensor].shape);
}

}  // namespace

double node_macs(const Graph& g, int node, const CostModelOptions& opt) {
  const Node& n = g.nodes[node];
  const std::string where = "node \"" + n.id + "\" (" + n.op + ")";
  switch (n.op_class) {
    case OpClass::conv: {
      // 2 * C_in * H_out * W_out * K_h * K_w * C_out
      if (n.inputs.empty() || n.outputs.empty())
        fail(ErrorKind::validation, where + ": conv needs an input and an output");
      auto [kh, kw] = attr_kernel(n, where);
      std::int64_t c_in = bound_at(g, n.inputs[0], 1);
      std::int64_t c_out = bound_at(g, n.outputs[0], 1);
      std::int64_t h_out = bound_at(g, n.outputs[0], 2);
      std::int64_t w_out = bound_at(g, n.outputs[0], 3);
      return 2.0 * static_cast<double>(c_in) * static_cast<double>(h_out) *
             static_cast<double>(w_out) * static_cast<double>(kh) *
             static_cast<double>(kw) * static_cast<double>(c_out);
    }
    case OpClass::matmul: {
      // 2 * M * N * K, times any leading batch extents of the output.
      if (n.inputs.empty() || n.outputs.empty())
        fail(ErrorKind::validation, where + ": matmul needs inputs and an output");
      const TensorDef& a = g.tensors[n.inputs[0]];
      const TensorDef& out = g.tensors[n.outputs[0]];
      PX_CHECK(a.shape.size() >= 2 && out.shape.size() >= 2, "matmul rank");
      double k = static_cast<double>(a.shape.back().bound());
      double m = static_cast<double>(out.shape[out.shape.size() - 2].bound());
      double nn = static_cast<double>(out.shape.back().bound());
      double batch = 1.0;
      for (std::size_t i = 0; i + 2 < out.shape.size(); ++i)
        batch *= static_cast<double>(out.shape[i].bound());
      return 2.0 * m * nn * k * batch;
    }
    case OpClass::elementwise: {
      if (n.outputs.empty()) return 0.0;
      return static_cast<double>(numel_of(g, n.outputs[0]));
    }
    case OpClass::pooling: {
      // H_out * W_out * K_h * K_w
      if (n.outputs.empty())
        fail(ErrorKind::validation, where + ": pooling needs an output");
      auto [kh, kw] = attr_kernel(n, where);
      const TensorDef& out = g.tensors[n.outputs[0]];
      std::int64_t h_out = out.shape.size() >= 4 ? out.shape[2].bound() : 1;
      std::int64_t w_out = out.shape.size() >= 4 ? out.shape[3].bound() : 1;
      return static_cast<double>(h_out) * static_cast<double>(w_out) *
             static_cast<double>(kh) * static_cast<double>(kw);
    }
    case OpClass::misc: {
      if (!opt.misc_half_cost || n.outputs.empty()) return 0.0;
      return 0.5 * static_cast<double>(numel_of(g, n.outputs[0]));
    }
    case OpClass::delegate_region: {
      // Written into attrs when the region was collapsed.
      if (!n.attrs.contains("macs") || !n.attrs["macs"].is_number())
        fail(ErrorKind::internal, where + ": delegate node lacks a macs attr");
      return n.attrs["macs"].get<double>();
    }
  }
  PX_CHECK(false, "unreachable op class");
  return 0.0;
}

std::vector<double> all_node_macs(const Graph& g, const CostModelOptions& opt) {
  std::vector<double> r(g.nodes.size(), 0.0);
  for (std::size_t v = 0; v < g.nodes.size(); ++v)
    r[v] = node_macs(g, static_cast<int>(v), opt);
  return r;
}

RegionStats region_stats(const Graph& g, const std::vector<int>& region,
                         const CostModelOptions& opt, bool check_connected) {
  PX_CHECK(!region.empty(), "empty region");
  // Scratch sized to the region, not the graph, so per-candidate stats stay
  // linear in the candidate over a whole enumeration.
  std::unordered_set<int> in_region(region.begin(), region.end());

  // The stats describe one schedulable unit; a disconnected set is a misuse.
  if (check_connected) {
    std::vector<int> stack = {region[0]};
    std::unordered_set<int> seen = {region[0]};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      auto visit = [&](int u) {
        if (in_region.count(u) && seen.insert(u).second) stack.push_back(u);
      };
      for (int u : g.in_nodes(v)) visit(u);
      for (int u : g.out_nodes(v)) visit(u);
    }
    if (seen.size() != region.size())
      fail(ErrorKind::validation, "region is not a connected node set");
  }

  RegionStats s;
  s.node_count = region.size();
  for (int v : region) s.macs += node_macs(g, v, opt);

  std::unordered_set<int> counted;
  auto count_boundary = [&](int t) {
    if (!counted.insert(t).second) return;
    PX_CHECK(g.tensors[t].size_resolved, "tensor size unresolved");
    s.boundary_bytes += g.tensors[t].byte_size;
  };
  for (int v : region) {
    for (int t : g.nodes[v].inputs) {
      const TensorDef& td = g.tensors[t];
      bool produced_inside = td.producer >= 0 && in_region.count(td.producer);
      if (!produced_inside) count_boundary(t);
    }
    for (int t : g.nodes[v].outputs) {
      const TensorDef& td = g.tensors[t];
      bool consumed_outside = g.is_graph_output(t);
      for (int c : td.consumers)
        if (!in_region.count(c)) consumed_outside = true;
      if (consumed_outside) count_boundary(t);
    }
  }
  return s;
}

double offload_time_sec(const RegionStats& s, const CostModelParams& p) {
  return p.dispatch_latency_sec + s.macs / p.acc_macs_per_sec +
         static_cast<double>(s.boundary_bytes) / p.mem_bytes_per_sec;
}

double cpu_time_sec(double macs, const CostModelParams& p) {
  return macs / p.cpu_macs_per_sec;
}

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::too_few_nodes: return "too_few_nodes";
    case RejectReason::too_little_compute: return "too_little_compute";
    case RejectReason::memory_bound: return "memory_bound";
  }
  return "?";
}

RejectReason reject_reason(const RegionStats& s, const DelegationThresholds& t) {
  if (s.node_count < t.min_nodes) return RejectReason::too_few_nodes;
  if (s.macs < t.min_macs) return RejectReason::too_little_compute;
  if (!(s.bytes_per_mac() <= t.max_bytes_per_mac)) return RejectReason::memory_bound;
  return RejectReason::none;
}

bool should_offload(const RegionStats& s, const DelegationThresholds& t) {
  return reject_reason(s, t) == RejectReason::none;
}

}  // namespace parallax
