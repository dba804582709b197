#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parallax/branch_layer.hpp"
#include "parallax/graph.hpp"

namespace parallax {

// Lifetime of one tensor inside its defining branch, in branch-step units.
// Tensors consumed by other branches or exported as graph outputs stay live
// to the branch's last step.
struct LivenessInterval {
  int tensor = -1;
  int def_step = 0;
  int last_use_step = 0;
  std::uint64_t size_bytes = 0;
  bool escapes = false;
};

struct LivenessResult {
  int branch = -1;
  std::size_t step_count = 0;
  std::vector<LivenessInterval> intervals;
  std::vector<std::string> warnings;
};

// One interval per tensor produced inside the branch. Tensors produced
// elsewhere (weights, inputs, upstream branches) are static from this
// branch's point of view and carry no interval.
LivenessResult compute_liveness(const Graph& g, const Branch& branch);

enum class ArenaEventKind { bump, reuse, release, resize };

struct ArenaEvent {
  int step = 0;
  ArenaEventKind kind = ArenaEventKind::bump;
  int tensor = -1;
  int buffer = -1;
  std::uint64_t bytes = 0;
};

struct ArenaBuffer {
  int id = -1;
  std::uint64_t offset = 0;
  std::uint64_t capacity = 0;
};

struct ArenaPlan {
  int branch = -1;
  std::uint64_t alignment = 1;
  std::vector<ArenaBuffer> buffers;
  std::vector<LivenessInterval> intervals;
  std::vector<int> buffer_of;  // parallel to intervals
  std::vector<ArenaEvent> trace;
  std::uint64_t arena_bytes = 0;
  std::uint64_t naive_bytes = 0;  // every tensor in its own buffer

  // Index into intervals/buffer_of, or -1 if the tensor is not planned here.
  int interval_of(int tensor_id) const;
};

// Step-ordered replay of the branch: buffers free at step s when their
// interval ended at s-1, then definitions at s allocate best-fit (smallest
// sufficient capacity, then smallest buffer id) or bump the arena pointer.
// A reused buffer keeps its original capacity; buffers never split.
ArenaPlan plan_arena(int branch_id, const LivenessResult& live,
                     std::uint64_t alignment = 1);

struct BranchMemoryEstimate {
  int branch = -1;
  std::uint64_t peak_bytes = 0;
  int peak_step = 0;  // first step attaining the peak
};

// Exact peak of the running live-byte total, via an endpoint delta sweep.
BranchMemoryEstimate estimate_peak(int branch_id,
                                   const std::vector<LivenessInterval>& intervals);

struct ArenaBacking {
  int id = -1;
  std::uint64_t capacity = 0;
};

struct SharedPoolPlan {
  std::vector<ArenaBacking> backings;
  std::vector<int> backing_of_branch;  // -1 when the branch has no arena demand
  std::vector<std::uint64_t> resident_bytes_per_layer;
  std::uint64_t resident_peak_bytes = 0;
  std::uint64_t total_backing_bytes = 0;
};

// Whole-arena reuse across layers: arenas of finished layers become donor
// backings for later layers (best-fit). Branches inside one layer always get
// distinct backings because they may run concurrently.
SharedPoolPlan cross_arena_share(const std::vector<ArenaPlan>& plans,
                                 const std::vector<Layer>& layers);

// Hard-errors when two branches of one layer share a backing region.
void validate_sharing(const SharedPoolPlan& pool, const std::vector<Layer>& layers);

// Shrinks in place; otherwise moves the tensor to the smallest existing
// buffer with enough capacity and no lifetime overlap, else bumps a fresh
// buffer. Only this plan's branch may be touched: a tensor planned elsewhere
// is an isolation error.
void apply_resize(ArenaPlan& plan, int tensor_id, std::uint64_t new_size);

}  // namespace parallax
