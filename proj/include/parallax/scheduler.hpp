#pragma once

#include <cstdint>
#include <vector>

#include "parallax/branch_layer.hpp"
#include "parallax/mem_plan.hpp"

namespace parallax {

// reserve: budget = free * (1 - margin). fraction: budget = free * margin.
enum class MarginMode { reserve, fraction };

struct Budget {
  std::uint64_t free_bytes = 0;
  double margin = 0.0;
  MarginMode mode = MarginMode::reserve;
  std::uint64_t budget_bytes = 0;
  bool margin_warning = false;  // margin outside the recommended [0.30, 0.50]
};

Budget compute_budget(std::uint64_t free_bytes, double margin,
                      MarginMode mode = MarginMode::reserve);

struct LayerSchedule {
  std::vector<int> parallel;    // selection order: ascending peak, then id
  std::vector<int> sequential;  // ascending id
  std::uint64_t parallel_peak_bytes = 0;
};

// Maximum-cardinality subset under the byte budget and thread cap: ascending
// (peak, id) prefix. Remaining branches run sequentially in id order.
LayerSchedule select_parallel_set(const std::vector<int>& branch_ids,
                                  const std::vector<std::uint64_t>& peak_of_branch,
                                  std::uint64_t budget_bytes, std::size_t max_threads);

struct Schedule {
  Budget budget;
  std::size_t max_threads = 1;
  std::vector<LayerSchedule> layers;
};

// Parallel sets are built only for parallel-eligible layers; every other
// layer runs its branches sequentially.
Schedule build_schedule(const PlanStructure& structure,
                        const std::vector<std::uint64_t>& peak_of_branch,
                        const Budget& budget, std::size_t max_threads);

struct SimOptions {
  std::size_t thread_count = 1;
  double spawn_overhead_sec = 50e-6;
};

struct TimelineEvent {
  int layer = -1;
  int branch = -1;
  int thread = 0;
  double start_sec = 0.0;
  double end_sec = 0.0;
  bool parallel_phase = false;
};

struct LayerSim {
  double latency_sec = 0.0;
  std::uint64_t resident_bytes = 0;  // max concurrent arena demand in the layer
};

struct SimReport {
  std::vector<LayerSim> layers;
  std::vector<TimelineEvent> timeline;
  double end_to_end_sec = 0.0;
  double sequential_latency_sec = 0.0;  // every branch serial, no spawn overhead
  std::uint64_t peak_resident_bytes = 0;
};

// Deterministic list scheduling per layer: parallel-set branches (each paying
// the spawn overhead) go to the earliest-finishing of thread_count workers,
// the sequential remainder runs after them, and a barrier ends the layer.
SimReport simulate(const Schedule& schedule, const std::vector<double>& branch_time_sec,
                   const std::vector<std::uint64_t>& peak_of_branch,
                   const SimOptions& opt);

struct ArenaComparison {
  std::uint64_t naive_bytes = 0;    // every tensor in a private buffer
  std::uint64_t planned_bytes = 0;  // sum of arena sizes
  double reduction_percent = 0.0;
};

ArenaComparison compare_naive(const std::vector<ArenaPlan>& plans);

}  // namespace parallax
