#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "parallax/pipeline.hpp"

namespace {

struct CliOptions {
  std::string graph_path;
  std::string profile_path;
  std::string out_path;
  std::string emit = "json";
  double beta = 1.5;
  double margin = 0.40;
  std::uint64_t free_mem_bytes = 1ull << 30;
  std::size_t threads = 6;
  bool sweep = false;
  bool misc_half_cost = false;
};

void add_common_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--graph", o.graph_path, "graph JSON file")->required();
  cmd->add_option("--profile", o.profile_path, "device profile JSON file");
  cmd->add_option("--beta", o.beta,
                  "max work imbalance (F_max/F_min) for a parallel layer");
  cmd->add_option("--margin", o.margin, "memory safety margin, in [0, 1)");
  cmd->add_option("--free-mem-bytes", o.free_mem_bytes,
                  "free memory snapshot the budget is derived from");
  cmd->add_option("--threads", o.threads, "thread cap for scheduling and simulation");
  cmd->add_option("--emit", o.emit, "output format")
      ->check(CLI::IsMember({"json", "text"}));
  cmd->add_option("--out", o.out_path, "write the report here instead of stdout");
  cmd->add_flag("--misc-half-cost", o.misc_half_cost,
                "charge misc ops half an element-visit instead of zero");
}

parallax::PipelineConfig make_config(const CliOptions& o) {
  parallax::PipelineConfig cfg;
  if (!o.profile_path.empty()) parallax::load_profile(o.profile_path, cfg);
  cfg.refine.balance_ratio = o.beta;
  cfg.refine.max_threads = o.threads;
  cfg.margin = o.margin;
  cfg.free_mem_bytes = o.free_mem_bytes;
  cfg.cost.misc_half_cost = o.misc_half_cost;
  return cfg;
}

void write_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) parallax::fail(parallax::ErrorKind::io, "cannot open '" + out_path + "'");
  out << text;
  out.flush();
  if (!out) parallax::fail(parallax::ErrorKind::io, "failed writing '" + out_path + "'");
}

int run(const std::string& command, const CliOptions& o) {
  parallax::PipelineConfig cfg = make_config(o);
  parallax::Graph graph = parallax::load_graph(o.graph_path);
  for (const std::string& w : graph.warnings) std::cerr << "warning: " << w << "\n";

  std::string output;
  if (command == "analyze") {
    parallax::AnalyzeResult a = parallax::analyze_stages(graph, cfg);
    output = o.emit == "json" ? parallax::analyze_json(a).dump(2) + "\n"
                              : parallax::analyze_text(a);
  } else if (command == "plan") {
    parallax::PipelineResult r = parallax::run_pipeline(graph, cfg);
    if (r.budget.margin_warning)
      std::cerr << "warning: margin " << o.margin
                << " is outside the recommended [0.30, 0.50]\n";
    output = o.emit == "json" ? parallax::plan_json(r).dump(2) + "\n"
                              : parallax::plan_text(r);
  } else {
    parallax::PipelineResult r = parallax::run_pipeline(graph, cfg);
    if (r.budget.margin_warning)
      std::cerr << "warning: margin " << o.margin
                << " is outside the recommended [0.30, 0.50]\n";
    if (o.sweep) {
      output = parallax::sweep_csv(r, cfg, o.threads);
    } else {
      parallax::SimReport sim = parallax::simulate_pipeline(r, cfg, o.threads);
      output = o.emit == "json"
                   ? parallax::simulate_json(r, sim, o.threads, cfg).dump(2) + "\n"
                   : parallax::simulate_text(r, sim, o.threads);
    }
  }
  write_output(o.out_path, output);
  return 0;
}

int exit_code(parallax::ErrorKind kind) {
  switch (kind) {
    case parallax::ErrorKind::parse:
    case parallax::ErrorKind::validation:
      return 1;
    case parallax::ErrorKind::io:
      return 2;
    case parallax::ErrorKind::internal:
      return 3;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "parallax: prunes accelerator delegate regions, extracts the branch-layer "
      "structure, plans per-branch arenas and schedules parallel branches under "
      "a memory budget"};
  app.require_subcommand(1);

  CliOptions opts;
  CLI::App* analyze = app.add_subcommand("analyze", "structure report per stage");
  add_common_options(analyze, opts);
  CLI::App* plan = app.add_subcommand("plan", "full plan dump: arenas and schedule");
  add_common_options(plan, opts);
  CLI::App* simulate =
      app.add_subcommand("simulate", "discrete-event latency and residency report");
  add_common_options(simulate, opts);
  simulate->add_flag("--sweep", opts.sweep,
                     "emit a CSV latency curve over thread counts 1..--threads");

  CLI11_PARSE(app, argc, argv);

  std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opts);
  } catch (const parallax::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
