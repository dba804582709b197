#pragma once

#include <cstdint>
#include <vector>

#include "parallax/graph.hpp"

namespace parallax {

// Device timing profile. Defaults describe the reference target: a mobile
// CPU next to a fast NPU behind a dispatch latency.
struct CostModelParams {
  double dispatch_latency_sec = 0.2e-3;
  double acc_macs_per_sec = 2.6e13;
  double cpu_macs_per_sec = 1e9;
  double mem_bytes_per_sec = 51.2e9;
};

// All rates positive, accelerator faster than CPU.
void check_params(const CostModelParams& p);

struct CostModelOptions {
  // Charge misc ops half an element-visit per output element instead of zero.
  bool misc_half_cost = false;
};

// Summary of a candidate region driving the offload decision.
struct RegionStats {
  std::size_t node_count = 0;
  double macs = 0.0;
  std::uint64_t boundary_bytes = 0;

  double bytes_per_mac() const;  // +inf when macs == 0
};

// Operational pruning thresholds. The defaults deliberately sit far above the
// exact profitability bounds so borderline regions stay on the CPU.
struct DelegationThresholds {
  std::size_t min_nodes = 3;
  double min_macs = 1e9;
  double max_bytes_per_mac = 0.1;
};

// Accepts every region; used by the naive-delegation comparator.
DelegationThresholds accept_all_thresholds();

struct ThresholdDerivation {
  // Work below this never amortizes the dispatch latency against the CPU.
  double compute_bound_macs;
  // Transfer ratio above this makes the bus, not the accelerator, the clock.
  double memory_bound_bytes_per_mac;
  DelegationThresholds operational;
};

ThresholdDerivation derive_thresholds(const CostModelParams& p,
                                      const DelegationThresholds& relax = {});

// MAC estimate for one node. Delegate nodes report the collapsed region's
// total, stored in their attrs at collapse time.
double node_macs(const Graph& g, int node, const CostModelOptions& opt = {});

std::vector<double> all_node_macs(const Graph& g, const CostModelOptions& opt = {});

// node_count, total MACs and boundary transfer bytes for a connected node set.
// Boundary tensors cross the region border in either direction; graph inputs
// consumed inside and graph outputs produced inside count as crossings.
// A disconnected set is a hard error unless check_connected is false, which
// the naive order-segmentation baseline uses: its schedule segments may span
// independent chains.
RegionStats region_stats(const Graph& g, const std::vector<int>& region,
                         const CostModelOptions& opt = {},
                         bool check_connected = true);

double offload_time_sec(const RegionStats& s, const CostModelParams& p);
double cpu_time_sec(double macs, const CostModelParams& p);

enum class RejectReason { none, too_few_nodes, too_little_compute, memory_bound };
const char* reject_reason_name(RejectReason r);

// All comparisons inclusive: a region exactly on a threshold offloads.
bool should_offload(const RegionStats& s, const DelegationThresholds& t);
RejectReason reject_reason(const RegionStats& s, const DelegationThresholds& t);

}  // namespace parallax
