#include "parallax/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "parallax/error.hpp"

namespace parallax {

Budget compute_budget(std::uint64_t free_bytes, double margin, MarginMode mode) {
  if (free_bytes == 0) fail(ErrorKind::validation, "free memory must be positive");
  if (!(margin >= 0.0 && margin < 1.0))
    fail(ErrorKind::validation, "safety margin must lie in [0, 1)");
  Budget b;
  b.free_bytes = free_bytes;
  b.margin = margin;
  b.mode = mode;
  b.margin_warning = margin < 0.30 || margin > 0.50;
  double factor = mode == MarginMode::reserve ? 1.0 - margin : margin;
  b.budget_bytes = static_cast<std::uint64_t>(
      std::llround(static_cast<double>(free_bytes) * factor));
  PX_CHECK(b.budget_bytes <= b.free_bytes, "budget exceeds free memory");
  return b;
}

LayerSchedule select_parallel_set(const std::vector<int>& branch_ids,
                                  const std::vector<std::uint64_t>& peak_of_branch,
                                  std::uint64_t budget_bytes, std::size_t max_threads) {
  std::vector<int> order = branch_ids;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (peak_of_branch[a] != peak_of_branch[b])
      return peak_of_branch[a] < peak_of_branch[b];
    return a < b;
  });

  LayerSchedule out;
  std::uint64_t used = 0;
  std::size_t take = 0;
  while (take < order.size() && take < max_threads &&
         used + peak_of_branch[order[take]] <= budget_bytes) {
    used += peak_of_branch[order[take]];
    ++take;
  }
  out.parallel.assign(order.begin(), order.begin() + take);
  out.parallel_peak_bytes = used;
  out.sequential.assign(order.begin() + take, order.end());
  std::sort(out.sequential.begin(), out.sequential.end());
  return out;
}

Schedule build_schedule(const PlanStructure& structure,
                        const std::vector<std::uint64_t>& peak_of_branch,
                        const Budget& budget, std::size_t max_threads) {
  if (max_threads < 1) fail(ErrorKind::validation, "max_threads must be >= 1");
  Schedule sch;
  sch.budget = budget;
  sch.max_threads = max_threads;
  for (const Layer& layer : structure.layers) {
    if (layer.parallel_eligible) {
      sch.layers.push_back(select_parallel_set(layer.branches, peak_of_branch,
                                               budget.budget_bytes, max_threads));
    } else {
      LayerSchedule ls;
      ls.sequential = layer.branches;
      sch.layers.push_back(std::move(ls));
    }
  }
  return sch;
}

namespace {

// Peak of the concurrent arena demand over a set of (start, end, bytes) spans.
std::uint64_t span_peak(const std::vector<TimelineEvent>& events,
                        const std::vector<std::uint64_t>& peak_of_branch) {
  std::vector<std::pair<double, std::int64_t>> deltas;
  deltas.reserve(events.size() * 2);
  for (const TimelineEvent& e : events) {
    auto bytes = static_cast<std::int64_t>(peak_of_branch[e.branch]);
    deltas.emplace_back(e.start_sec, bytes);
    deltas.emplace_back(e.end_sec, -bytes);
  }
  std::sort(deltas.begin(), deltas.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first < b.first;
              return a.second < b.second;  // releases before acquisitions
            });
  std::int64_t running = 0, peak = 0;
  for (const auto& [t, d] : deltas) {
    (void)t;
    running += d;
    peak = std::max(peak, running);
  }
  return static_cast<std::uint64_t>(peak);
}

}  // namespace

SimReport simulate(const Schedule& schedule, const std::vector<double>& branch_time_sec,
                   const std::vector<std::uint64_t>& peak_of_branch,
                   const SimOptions& opt) {
  if (opt.thread_count < 1) fail(ErrorKind::validation, "thread count must be >= 1");
  SimReport report;
  double clock = 0.0;

  for (std::size_t li = 0; li < schedule.layers.size(); ++li) {
    const LayerSchedule& ls = schedule.layers[li];
    const double layer_start = clock;
    std::vector<TimelineEvent> layer_events;

    // (finish time, thread id) min-heap; earliest-finishing thread takes the
    // next parallel-set branch.
    using Slot = std::pair<double, int>;
    std::priority_queue<Slot, std::vector<Slot>, std::greater<>> threads;
    for (std::size_t t = 0; t < opt.thread_count; ++t)
      threads.emplace(layer_start, static_cast<int>(t));
    double parallel_end = layer_start;
    for (int b : ls.parallel) {
      auto [free_at, tid] = threads.top();
      threads.pop();
      TimelineEvent ev;
      ev.layer = static_cast<int>(li);
      ev.branch = b;
      ev.thread = tid;
      ev.start_sec = free_at;
      ev.end_sec = free_at + opt.spawn_overhead_sec + branch_time_sec[b];
      ev.parallel_phase = true;
      threads.emplace(ev.end_sec, tid);
      parallel_end = std::max(parallel_end, ev.end_sec);
      layer_events.push_back(ev);
    }

    double cursor = parallel_end;
    for (int b : ls.sequential) {
      TimelineEvent ev;
      ev.layer = static_cast<int>(li);
      ev.branch = b;
      ev.thread = 0;
      ev.start_sec = cursor;
      ev.end_sec = cursor + branch_time_sec[b];
      ev.parallel_phase = false;
      cursor = ev.end_sec;
      layer_events.push_back(ev);
    }

    LayerSim sim;
    sim.latency_sec = cursor - layer_start;
    sim.resident_bytes = span_peak(layer_events, peak_of_branch);
    report.layers.push_back(sim);
    report.peak_resident_bytes =
        std::max(report.peak_resident_bytes, sim.resident_bytes);
    report.timeline.insert(report.timeline.end(), layer_events.begin(),
                           layer_events.end());
    clock = cursor;

    for (int b : ls.parallel) report.sequential_latency_sec += branch_time_sec[b];
    for (int b : ls.sequential) report.sequential_latency_sec += branch_time_sec[b];
  }

  report.end_to_end_sec = clock;
  return report;
}

ArenaComparison compare_naive(const std::vector<ArenaPlan>& plans) {
  ArenaComparison cmp;
  for (const ArenaPlan& p : plans) {
    cmp.naive_bytes += p.naive_bytes;
    cmp.planned_bytes += p.arena_bytes;
  }
  if (cmp.naive_bytes > 0)
    cmp.reduction_percent =
        100.0 * (1.0 - static_cast<double>(cmp.planned_bytes) /
                           static_cast<double>(cmp.naive_bytes));
  return cmp;
}

}  // namespace parallax
