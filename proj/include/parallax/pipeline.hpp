#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "parallax/branch_layer.hpp"
#include "parallax/cost_model.hpp"
#include "parallax/mem_plan.hpp"
#include "parallax/partition.hpp"
#include "parallax/scheduler.hpp"

namespace parallax {

struct PipelineConfig {
  CostModelParams params;
  CostModelOptions cost;
  DelegationThresholds thresholds;
  RefineConfig refine;
  double margin = 0.40;
  MarginMode margin_mode = MarginMode::reserve;
  std::uint64_t free_mem_bytes = 1ull << 30;
  double spawn_overhead_sec = 50e-6;
  std::uint64_t arena_alignment = 1;
};

// Device profile JSON: {"L_sec","R_acc","R_cpu","B_bw"} plus optional
// {"min_nodes","min_flops","max_bytes_per_mac","spawn_overhead_sec",
//  "margin_mode"("reserve"|"fraction")}. Unknown keys are rejected so typos
// cannot silently fall back to defaults.
void apply_profile(const nlohmann::json& profile, PipelineConfig& cfg);
void load_profile(const std::string& path, PipelineConfig& cfg);

struct PipelineResult {
  PartitionedGraph part;
  std::vector<double> macs;  // per node of part.graph
  PlanStructure structure;
  std::vector<LivenessResult> liveness;        // per branch
  std::vector<ArenaPlan> plans;                // per branch
  std::vector<BranchMemoryEstimate> peaks;     // per branch
  std::vector<std::uint64_t> peak_of_branch;   // bytes, indexed by branch id
  std::vector<double> branch_time_sec;         // indexed by branch id
  SharedPoolPlan sharing;
  Budget budget;
  Schedule schedule;
  ArenaComparison arenas;
};

// Validates, resolves shapes, partitions delegate regions, extracts the
// branch-layer structure, plans arenas and budgeted parallel sets.
PipelineResult run_pipeline(const Graph& g, const PipelineConfig& cfg);

SimReport simulate_pipeline(const PipelineResult& r, const PipelineConfig& cfg,
                            std::size_t thread_count);

// Structure metrics before delegation, after naive order-segment delegation,
// and after pruned component delegation.
struct AnalyzeResult {
  StructureReport pre;
  StructureReport post;
  StructureReport parallax;
};

AnalyzeResult analyze_stages(const Graph& g, const PipelineConfig& cfg);

nlohmann::ordered_json analyze_json(const AnalyzeResult& a);
std::string analyze_text(const AnalyzeResult& a);

nlohmann::ordered_json plan_json(const PipelineResult& r);
std::string plan_text(const PipelineResult& r);

nlohmann::ordered_json simulate_json(const PipelineResult& r, const SimReport& sim,
                                     std::size_t thread_count,
                                     const PipelineConfig& cfg);
std::string simulate_text(const PipelineResult& r, const SimReport& sim,
                          std::size_t thread_count);

// Latency over thread counts 1..max_threads, one row per count.
std::string sweep_csv(const PipelineResult& r, const PipelineConfig& cfg,
                      std::size_t max_threads);

}  // namespace parallax
