#include "parallax/mem_plan.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include "parallax/error.hpp"

namespace parallax {

namespace {

std::uint64_t align_up(std::uint64_t v, std::uint64_t alignment) {
  PX_CHECK(alignment >= 1, "alignment must be >= 1");
  std::uint64_t rem = v % alignment;
  return rem == 0 ? v : v + (alignment - rem);
}

bool intervals_overlap(const LivenessInterval& a, const LivenessInterval& b) {
  return a.def_step <= b.last_use_step && b.def_step <= a.last_use_step;
}

}  // namespace

LivenessResult compute_liveness(const Graph& g, const Branch& branch) {
  LivenessResult out;
  out.branch = branch.id;
  out.step_count = branch.nodes.size();
  const int last_step = static_cast<int>(branch.nodes.size()) - 1;

  std::unordered_map<int, int> step_of;
  step_of.reserve(branch.nodes.size());
  for (std::size_t s = 0; s < branch.nodes.size(); ++s)
    step_of.emplace(branch.nodes[s], static_cast<int>(s));

  for (std::size_t s = 0; s < branch.nodes.size(); ++s) {
    const Node& node = g.nodes[branch.nodes[s]];
    for (int t : node.outputs) {
      const TensorDef& td = g.tensors[t];
      if (!td.size_resolved)
        fail(ErrorKind::validation,
             "tensor '" + td.id + "' has no resolved size; run shape inference first");
      LivenessInterval iv;
      iv.tensor = t;
      iv.def_step = static_cast<int>(s);
      iv.size_bytes = td.byte_size;
      int last_use = -1;
      bool escapes = g.is_graph_output(t);
      for (int c : td.consumers) {
        auto it = step_of.find(c);
        if (it == step_of.end()) escapes = true;
        else last_use = std::max(last_use, it->second);
      }
      iv.escapes = escapes;
      if (escapes) {
        iv.last_use_step = last_step;
      } else if (last_use >= 0) {
        iv.last_use_step = last_use;
      } else {
        iv.last_use_step = iv.def_step;
        out.warnings.push_back("tensor '" + td.id +
                               "' is never consumed and is not a graph output");
      }
      PX_CHECK(iv.def_step <= iv.last_use_step, "inverted liveness interval");
      out.intervals.push_back(iv);
    }
  }
  return out;
}

int ArenaPlan::interval_of(int tensor_id) const {
  for (std::size_t i = 0; i < intervals.size(); ++i)
    if (intervals[i].tensor == tensor_id) return static_cast<int>(i);
  return -1;
}

ArenaPlan plan_arena(int branch_id, const LivenessResult& live, std::uint64_t alignment) {
  PX_CHECK(alignment >= 1, "alignment must be >= 1");
  ArenaPlan plan;
  plan.branch = branch_id;
  plan.alignment = alignment;
  plan.intervals = live.intervals;
  plan.buffer_of.assign(plan.intervals.size(), -1);

  std::vector<std::vector<int>> defs_at(live.step_count), ends_at(live.step_count);
  for (std::size_t i = 0; i < plan.intervals.size(); ++i) {
    const LivenessInterval& iv = plan.intervals[i];
    defs_at[iv.def_step].push_back(static_cast<int>(i));
    ends_at[iv.last_use_step].push_back(static_cast<int>(i));
    plan.naive_bytes += iv.size_bytes;
  }

  std::map<std::uint64_t, std::set<int>> free_list;  // capacity -> buffer ids
  std::uint64_t cursor = 0;

  for (std::size_t s = 0; s < live.step_count; ++s) {
    if (s > 0) {
      for (int i : ends_at[s - 1]) {
        int buf = plan.buffer_of[i];
        free_list[plan.buffers[buf].capacity].insert(buf);
        plan.trace.push_back({static_cast<int>(s), ArenaEventKind::release,
                              plan.intervals[i].tensor, buf,
                              plan.intervals[i].size_bytes});
      }
    }
    for (int i : defs_at[s]) {
      const LivenessInterval& iv = plan.intervals[i];
      auto it = free_list.lower_bound(iv.size_bytes);
      if (it != free_list.end()) {
        int buf = *it->second.begin();
        it->second.erase(it->second.begin());
        if (it->second.empty()) free_list.erase(it);
        plan.buffer_of[i] = buf;
        plan.trace.push_back({static_cast<int>(s), ArenaEventKind::reuse, iv.tensor,
                              buf, iv.size_bytes});
      } else {
        ArenaBuffer buf;
        buf.id = static_cast<int>(plan.buffers.size());
        buf.offset = align_up(cursor, alignment);
        buf.capacity = iv.size_bytes;
        cursor = buf.offset + buf.capacity;
        plan.buffers.push_back(buf);
        plan.buffer_of[i] = buf.id;
        plan.trace.push_back({static_cast<int>(s), ArenaEventKind::bump, iv.tensor,
                              buf.id, iv.size_bytes});
      }
    }
  }

  plan.arena_bytes = cursor;
  if (alignment == 1)
    PX_CHECK(plan.arena_bytes <= plan.naive_bytes, "arena exceeds naive total");
  return plan;
}

BranchMemoryEstimate estimate_peak(int branch_id,
                                   const std::vector<LivenessInterval>& intervals) {
  BranchMemoryEstimate est;
  est.branch = branch_id;
  if (intervals.empty()) return est;

  int max_step = 0;
  for (const LivenessInterval& iv : intervals)
    max_step = std::max(max_step, iv.last_use_step);
  std::vector<std::int64_t> delta(static_cast<std::size_t>(max_step) + 2, 0);
  for (const LivenessInterval& iv : intervals) {
    delta[iv.def_step] += static_cast<std::int64_t>(iv.size_bytes);
    delta[iv.last_use_step + 1] -= static_cast<std::int64_t>(iv.size_bytes);
  }
  std::int64_t running = 0, peak = 0;
  int peak_step = 0;
  for (int s = 0; s <= max_step; ++s) {
    running += delta[s];
    if (running > peak) {
      peak = running;
      peak_step = s;
    }
  }
  est.peak_bytes = static_cast<std::uint64_t>(peak);
  est.peak_step = peak_step;
  return est;
}

SharedPoolPlan cross_arena_share(const std::vector<ArenaPlan>& plans,
                                 const std::vector<Layer>& layers) {
  int max_branch = -1;
  for (const ArenaPlan& p : plans) max_branch = std::max(max_branch, p.branch);
  std::vector<std::uint64_t> demand(static_cast<std::size_t>(max_branch) + 1, 0);
  for (const ArenaPlan& p : plans) {
    PX_CHECK(p.branch >= 0, "arena plan without branch id");
    demand[p.branch] = p.arena_bytes;
  }

  SharedPoolPlan out;
  out.backing_of_branch.assign(demand.size(), -1);

  std::map<std::uint64_t, std::set<int>> pool;  // capacity -> backing ids
  for (const Layer& layer : layers) {
    std::uint64_t resident = 0;
    std::vector<int> taken;
    for (int b : layer.branches) {
      std::uint64_t need = demand[b];
      resident += need;
      if (need == 0) continue;
      auto it = pool.lower_bound(need);
      int backing;
      if (it != pool.end()) {
        backing = *it->second.begin();
        it->second.erase(it->second.begin());
        if (it->second.empty()) pool.erase(it);
      } else {
        backing = static_cast<int>(out.backings.size());
        out.backings.push_back({backing, need});
        out.total_backing_bytes += need;
      }
      out.backing_of_branch[b] = backing;
      taken.push_back(backing);
    }
    for (int backing : taken)
      pool[out.backings[backing].capacity].insert(backing);
    out.resident_bytes_per_layer.push_back(resident);
    out.resident_peak_bytes = std::max(out.resident_peak_bytes, resident);
  }
  return out;
}

void validate_sharing(const SharedPoolPlan& pool, const std::vector<Layer>& layers) {
  for (std::size_t li = 0; li < layers.size(); ++li) {
    std::set<int> seen;
    for (int b : layers[li].branches) {
      if (b < 0 || static_cast<std::size_t>(b) >= pool.backing_of_branch.size()) continue;
      int backing = pool.backing_of_branch[b];
      if (backing < 0) continue;
      if (!seen.insert(backing).second)
        fail(ErrorKind::validation,
             "backing region " + std::to_string(backing) +
                 " shared inside layer " + std::to_string(li) +
                 "; same-layer branches may run concurrently");
    }
  }
}

void apply_resize(ArenaPlan& plan, int tensor_id, std::uint64_t new_size) {
  int idx = plan.interval_of(tensor_id);
  if (idx < 0)
    fail(ErrorKind::validation,
         "tensor " + std::to_string(tensor_id) + " is not planned in branch " +
             std::to_string(plan.branch) + "; arenas are branch-private");
  LivenessInterval& iv = plan.intervals[idx];
  int cur = plan.buffer_of[idx];

  std::int64_t naive_delta =
      static_cast<std::int64_t>(new_size) - static_cast<std::int64_t>(iv.size_bytes);
  plan.naive_bytes = static_cast<std::uint64_t>(
      static_cast<std::int64_t>(plan.naive_bytes) + naive_delta);

  if (new_size <= plan.buffers[cur].capacity) {
    iv.size_bytes = new_size;
    plan.trace.push_back({iv.def_step, ArenaEventKind::resize, tensor_id, cur, new_size});
    return;
  }

  // Best-fit among buffers whose assigned lifetimes never overlap this one.
  int best = -1;
  for (const ArenaBuffer& buf : plan.buffers) {
    if (buf.capacity < new_size) continue;
    bool clash = false;
    for (std::size_t j = 0; j < plan.intervals.size(); ++j) {
      if (static_cast<int>(j) == idx || plan.buffer_of[j] != buf.id) continue;
      if (intervals_overlap(plan.intervals[j], iv)) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    if (best < 0 || buf.capacity < plan.buffers[best].capacity) best = buf.id;
  }

  if (best < 0) {
    ArenaBuffer buf;
    buf.id = static_cast<int>(plan.buffers.size());
    buf.offset = align_up(plan.arena_bytes, plan.alignment);
    buf.capacity = new_size;
    plan.arena_bytes = buf.offset + buf.capacity;
    plan.buffers.push_back(buf);
    best = buf.id;
  }
  plan.buffer_of[idx] = best;
  iv.size_bytes = new_size;
  plan.trace.push_back({iv.def_step, ArenaEventKind::resize, tensor_id, best, new_size});
}

}  // namespace parallax
