#include "parallax/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "parallax/error.hpp"

namespace parallax {

namespace {

double require_number(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_number())
    fail(ErrorKind::validation, "profile key '" + key + "' must be a number");
  return j.at(key).get<double>();
}

Graph prepared_copy(const Graph& g) {
  ValidationReport report = validate(g);
  if (!report.ok()) {
    std::string msg = "graph failed validation";
    if (!report.issues.empty())
      msg += ": " + report.issues.front().check + ": " + report.issues.front().detail;
    fail(ErrorKind::validation, msg);
  }
  Graph copy = g;
  infer_shapes(copy);
  return copy;
}

RegionStats delegate_stats(const Node& n) {
  RegionStats s;
  if (!n.attrs.contains("macs") || !n.attrs.contains("boundary_bytes") ||
      !n.attrs.contains("node_count"))
    fail(ErrorKind::internal, "delegate node '" + n.id + "' lacks region totals");
  s.macs = n.attrs["macs"].get<double>();
  s.boundary_bytes = n.attrs["boundary_bytes"].get<std::uint64_t>();
  s.node_count = n.attrs["node_count"].get<std::size_t>();
  return s;
}

nlohmann::ordered_json structure_json(const StructureReport& r) {
  nlohmann::ordered_json j;
  j["nodes"] = r.node_count;
  j["branches"] = r.branch_count;
  j["layers"] = r.layer_count;
  j["par_layers"] = r.parallel_layer_count;
  j["max_branches"] = r.max_branches_in_layer;
  return j;
}

nlohmann::ordered_json comparison_json(const ArenaComparison& c) {
  nlohmann::ordered_json j;
  j["naive_bytes"] = c.naive_bytes;
  j["planned_bytes"] = c.planned_bytes;
  j["reduction_percent"] = c.reduction_percent;
  return j;
}

}  // namespace

void apply_profile(const nlohmann::json& profile, PipelineConfig& cfg) {
  if (!profile.is_object())
    fail(ErrorKind::validation, "profile must be a JSON object");
  for (const auto& [key, value] : profile.items()) {
    if (key == "schema") {
      continue;
    } else if (key == "L_sec") {
      cfg.params.dispatch_latency_sec = require_number(profile, key);
    } else if (key == "R_acc") {
      cfg.params.acc_macs_per_sec = require_number(profile, key);
    } else if (key == "R_cpu") {
      cfg.params.cpu_macs_per_sec = require_number(profile, key);
    } else if (key == "B_bw") {
      cfg.params.mem_bytes_per_sec = require_number(profile, key);
    } else if (key == "min_nodes") {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        fail(ErrorKind::validation, "profile key 'min_nodes' must be a non-negative integer");
      cfg.thresholds.min_nodes = value.get<std::size_t>();
    } else if (key == "min_flops") {
      cfg.thresholds.min_macs = require_number(profile, key);
    } else if (key == "max_bytes_per_mac") {
      cfg.thresholds.max_bytes_per_mac = require_number(profile, key);
    } else if (key == "spawn_overhead_sec") {
      cfg.spawn_overhead_sec = require_number(profile, key);
    } else if (key == "margin_mode") {
      std::string mode = value.is_string() ? value.get<std::string>() : "";
      if (mode == "reserve") cfg.margin_mode = MarginMode::reserve;
      else if (mode == "fraction") cfg.margin_mode = MarginMode::fraction;
      else fail(ErrorKind::validation, "margin_mode must be 'reserve' or 'fraction'");
    } else {
      fail(ErrorKind::validation, "unknown profile key '" + key + "'");
    }
  }
  check_params(cfg.params);
}

void load_profile(const std::string& path, PipelineConfig& cfg) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open profile '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json profile = nlohmann::json::parse(buf.str(), nullptr, false);
  if (profile.is_discarded())
    fail(ErrorKind::validation, "profile '" + path + "' is not valid JSON");
  apply_profile(profile, cfg);
}

PipelineResult run_pipeline(const Graph& g, const PipelineConfig& cfg) {
  check_params(cfg.params);
  Graph prepared = prepared_copy(g);

  PipelineResult r;
  r.part = prune_and_collapse(prepared, enumerate_candidates(prepared),
                              cfg.thresholds, cfg.cost);
  r.macs = all_node_macs(r.part.graph, cfg.cost);
  r.structure = analyze_structure(r.part.graph, r.macs, cfg.refine);

  const std::size_t nb = r.structure.branches.size();
  r.peak_of_branch.assign(nb, 0);
  r.branch_time_sec.assign(nb, 0.0);
  for (const Branch& b : r.structure.branches) {
    LivenessResult live = compute_liveness(r.part.graph, b);
    ArenaPlan plan = plan_arena(b.id, live, cfg.arena_alignment);
    BranchMemoryEstimate peak = estimate_peak(b.id, live.intervals);
    r.peak_of_branch[b.id] = peak.peak_bytes;
    double t = 0.0;
    for (int v : b.nodes) {
      const Node& node = r.part.graph.nodes[v];
      if (node.op_class == OpClass::delegate_region)
        t += offload_time_sec(delegate_stats(node), cfg.params);
      else
        t += cpu_time_sec(r.macs[v], cfg.params);
    }
    r.branch_time_sec[b.id] = t;
    r.liveness.push_back(std::move(live));
    r.plans.push_back(std::move(plan));
    r.peaks.push_back(peak);
  }

  r.sharing = cross_arena_share(r.plans, r.structure.layers);
  validate_sharing(r.sharing, r.structure.layers);
  r.budget = compute_budget(cfg.free_mem_bytes, cfg.margin, cfg.margin_mode);
  r.schedule =
      build_schedule(r.structure, r.peak_of_branch, r.budget, cfg.refine.max_threads);
  r.arenas = compare_naive(r.plans);
  return r;
}

SimReport simulate_pipeline(const PipelineResult& r, const PipelineConfig& cfg,
                            std::size_t thread_count) {
  SimOptions opt;
  opt.thread_count = thread_count;
  opt.spawn_overhead_sec = cfg.spawn_overhead_sec;
  return simulate(r.schedule, r.branch_time_sec, r.peak_of_branch, opt);
}

AnalyzeResult analyze_stages(const Graph& g, const PipelineConfig& cfg) {
  Graph prepared = prepared_copy(g);
  AnalyzeResult a;
  a.pre = analyze_structure(prepared, all_node_macs(prepared, cfg.cost), cfg.refine)
              .report();

  PartitionedGraph post = prune_and_collapse(
      prepared, naive_order_candidates(prepared), accept_all_thresholds(), cfg.cost);
  a.post = analyze_structure(post.graph, all_node_macs(post.graph, cfg.cost),
                             cfg.refine)
               .report();

  PartitionedGraph px = prune_and_collapse(prepared, enumerate_candidates(prepared),
                                           cfg.thresholds, cfg.cost);
  a.parallax = analyze_structure(px.graph, all_node_macs(px.graph, cfg.cost),
                                 cfg.refine)
                   .report();
  return a;
}

nlohmann::ordered_json analyze_json(const AnalyzeResult& a) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["pre"] = structure_json(a.pre);
  j["post"] = structure_json(a.post);
  j["parallax"] = structure_json(a.parallax);
  return j;
}

std::string analyze_text(const AnalyzeResult& a) {
  std::ostringstream out;
  out << "stage      nodes  branches  layers  par_layers  max_branches\n";
  auto row = [&out](const char* name, const StructureReport& r) {
    out << name << "  " << r.node_count << "  " << r.branch_count << "  "
        << r.layer_count << "  " << r.parallel_layer_count << "  "
        << r.max_branches_in_layer << "\n";
  };
  row("pre     ", a.pre);
  row("post    ", a.post);
  row("parallax", a.parallax);
  return out.str();
}

nlohmann::ordered_json plan_json(const PipelineResult& r) {
  const Graph& g = r.part.graph;
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["structure"] = structure_json(r.structure.report());
  j["audit"] = audit_json(r.part.audit);

  j["branches"] = nlohmann::ordered_json::array();
  for (const Branch& b : r.structure.branches) {
    nlohmann::ordered_json bj;
    bj["id"] = b.id;
    bj["nodes"] = nlohmann::ordered_json::array();
    for (int v : b.nodes) bj["nodes"].push_back(g.nodes[v].id);
    bj["macs"] = b.macs;
    bj["contains_delegate"] = b.contains_delegate;
    bj["time_sec"] = r.branch_time_sec[b.id];
    j["branches"].push_back(std::move(bj));
  }

  j["layers"] = nlohmann::ordered_json::array();
  for (const Layer& l : r.structure.layers) {
    nlohmann::ordered_json lj;
    lj["branches"] = l.branches;
    lj["parallel_eligible"] = l.parallel_eligible;
    j["layers"].push_back(std::move(lj));
  }

  j["arenas"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.plans.size(); ++i) {
    const ArenaPlan& p = r.plans[i];
    nlohmann::ordered_json aj;
    aj["branch"] = p.branch;
    aj["arena_bytes"] = p.arena_bytes;
    aj["naive_bytes"] = p.naive_bytes;
    aj["peak_bytes"] = r.peaks[i].peak_bytes;
    aj["peak_step"] = r.peaks[i].peak_step;
    aj["buffers"] = nlohmann::ordered_json::array();
    for (const ArenaBuffer& buf : p.buffers) {
      nlohmann::ordered_json bj;
      bj["id"] = buf.id;
      bj["offset"] = buf.offset;
      bj["capacity"] = buf.capacity;
      aj["buffers"].push_back(std::move(bj));
    }
    aj["tensors"] = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < p.intervals.size(); ++k)
      aj["tensors"][g.tensors[p.intervals[k].tensor].id] = p.buffer_of[k];
    j["arenas"].push_back(std::move(aj));
  }

  nlohmann::ordered_json sj;
  sj["resident_peak_bytes"] = r.sharing.resident_peak_bytes;
  sj["total_backing_bytes"] = r.sharing.total_backing_bytes;
  sj["resident_bytes_per_layer"] = r.sharing.resident_bytes_per_layer;
  sj["backing_of_branch"] = r.sharing.backing_of_branch;
  sj["backings"] = nlohmann::ordered_json::array();
  for (const ArenaBacking& b : r.sharing.backings) {
    nlohmann::ordered_json bj;
    bj["id"] = b.id;
    bj["capacity"] = b.capacity;
    sj["backings"].push_back(std::move(bj));
  }
  j["sharing"] = std::move(sj);

  nlohmann::ordered_json budj;
  budj["free_bytes"] = r.budget.free_bytes;
  budj["margin"] = r.budget.margin;
  budj["mode"] = r.budget.mode == MarginMode::reserve ? "reserve" : "fraction";
  budj["budget_bytes"] = r.budget.budget_bytes;
  budj["margin_warning"] = r.budget.margin_warning;
  j["budget"] = std::move(budj);

  j["schedule"] = nlohmann::ordered_json::array();
  for (const LayerSchedule& ls : r.schedule.layers) {
    nlohmann::ordered_json lj;
    lj["parallel"] = ls.parallel;
    lj["sequential"] = ls.sequential;
    lj["parallel_peak_bytes"] = ls.parallel_peak_bytes;
    j["schedule"].push_back(std::move(lj));
  }

  j["comparison"] = comparison_json(r.arenas);
  return j;
}

std::string plan_text(const PipelineResult& r) {
  StructureReport rep = r.structure.report();
  std::ostringstream out;
  out << "nodes " << rep.node_count << ", branches " << rep.branch_count
      << ", layers " << rep.layer_count << ", par_layers "
      << rep.parallel_layer_count << ", max_branches "
      << rep.max_branches_in_layer << "\n";
  out << "budget " << r.budget.budget_bytes << " bytes (free "
      << r.budget.free_bytes << ", margin " << r.budget.margin << ")\n";
  out << "arena planned " << r.arenas.planned_bytes << " bytes, naive "
      << r.arenas.naive_bytes << " bytes, reduction " << r.arenas.reduction_percent
      << "%\n";
  out << "resident peak " << r.sharing.resident_peak_bytes << " bytes\n";
  for (std::size_t li = 0; li < r.schedule.layers.size(); ++li) {
    const LayerSchedule& ls = r.schedule.layers[li];
    out << "layer " << li << ": parallel [";
    for (std::size_t i = 0; i < ls.parallel.size(); ++i)
      out << (i ? " " : "") << ls.parallel[i];
    out << "], sequential [";
    for (std::size_t i = 0; i < ls.sequential.size(); ++i)
      out << (i ? " " : "") << ls.sequential[i];
    out << "]\n";
  }
  return out.str();
}

nlohmann::ordered_json simulate_json(const PipelineResult& r, const SimReport& sim,
                                     std::size_t thread_count,
                                     const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["thread_count"] = thread_count;
  j["spawn_overhead_sec"] = cfg.spawn_overhead_sec;
  j["end_to_end_sec"] = sim.end_to_end_sec;
  j["sequential_latency_sec"] = sim.sequential_latency_sec;
  j["peak_resident_bytes"] = sim.peak_resident_bytes;

  j["layers"] = nlohmann::ordered_json::array();
  for (std::size_t li = 0; li < sim.layers.size(); ++li) {
    nlohmann::ordered_json lj;
    lj["latency_sec"] = sim.layers[li].latency_sec;
    lj["resident_bytes"] = sim.layers[li].resident_bytes;
    lj["parallel"] = r.schedule.layers[li].parallel;
    lj["sequential"] = r.schedule.layers[li].sequential;
    j["layers"].push_back(std::move(lj));
  }

  j["timeline"] = nlohmann::ordered_json::array();
  for (const TimelineEvent& e : sim.timeline) {
    nlohmann::ordered_json ej;
    ej["layer"] = e.layer;
    ej["branch"] = e.branch;
    ej["thread"] = e.thread;
    ej["start_sec"] = e.start_sec;
    ej["end_sec"] = e.end_sec;
    ej["parallel_phase"] = e.parallel_phase;
    j["timeline"].push_back(std::move(ej));
  }

  j["comparison"] = comparison_json(r.arenas);
  return j;
}

std::string simulate_text(const PipelineResult& r, const SimReport& sim,
                          std::size_t thread_count) {
  (void)r;
  std::ostringstream out;
  out << "threads " << thread_count << "\n";
  out << "end_to_end_sec " << sim.end_to_end_sec << "\n";
  out << "sequential_latency_sec " << sim.sequential_latency_sec << "\n";
  out << "peak_resident_bytes " << sim.peak_resident_bytes << "\n";
  for (std::size_t li = 0; li < sim.layers.size(); ++li)
    out << "layer " << li << ": latency_sec " << sim.layers[li].latency_sec
        << ", resident_bytes " << sim.layers[li].resident_bytes << "\n";
  return out.str();
}

std::string sweep_csv(const PipelineResult& r, const PipelineConfig& cfg,
                      std::size_t max_threads) {
  std::ostringstream out;
  out << "threads,end_to_end_sec\n";
  for (std::size_t t = 1; t <= max_threads; ++t) {
    SimReport sim = simulate_pipeline(r, cfg, t);
    out << t << "," << sim.end_to_end_sec << "\n";
  }
  return out.str();
}

}  // namespace parallax
