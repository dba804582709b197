#include <doctest.h>

#include <random>
#include <set>

#include "parallax/partition.hpp"
#include "support/fixtures.hpp"

using namespace parallax;

namespace {

// capable(A) -> cpu(X) -> capable(B), plus a direct A -> B edge: the capable
// component {A, B} is connected but not convex.
Graph reentrant_pair() {
  testsupport::GraphBuilder b;
  for (const char* t : {"x", "a1", "a2", "xo", "bo"}) b.tensor(t, {1, 64});
  b.mark_input("x");
  b.node("A", "ReLU", {"x"}, {"a1", "a2"}, nlohmann::json::object(), true);
  b.node("X", "GELU", {"a1"}, {"xo"});
  b.node("B", "Add", {"a2", "xo"}, {"bo"}, nlohmann::json::object(), true);
  b.mark_output("bo");
  return b.finish();
}

}  // namespace

TEST_CASE("capable components become candidates") {
  testsupport::GraphBuilder b;
  for (int i = 0; i <= 4; ++i) b.tensor("t" + std::to_string(i), {1, 64});
  b.mark_input("t0");
  b.node("n0", "ReLU", {"t0"}, {"t1"});
  b.node("n1", "GELU", {"t1"}, {"t2"}, nlohmann::json::object(), true);
  b.node("n2", "Sigmoid", {"t2"}, {"t3"}, nlohmann::json::object(), true);
  b.node("n3", "Tanh", {"t3"}, {"t4"});
  b.mark_output("t4");
  Graph g = b.finish();

  std::vector<CandidateRegion> cands = enumerate_candidates(g);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].nodes == std::vector<int>{1, 2});
}

TEST_CASE("control-flow nodes never join a candidate") {
  testsupport::GraphBuilder b;
  for (int i = 0; i <= 2; ++i) b.tensor("t" + std::to_string(i), {1, 64});
  b.mark_input("t0");
  b.node("n0", "ReLU", {"t0"}, {"t1"}, nlohmann::json::object(), true);
  b.node("n1", "While", {"t1"}, {"t2"}, nlohmann::json::object(), true, true);
  b.mark_output("t2");
  Graph g = b.finish();
  std::vector<CandidateRegion> cands = enumerate_candidates(g);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].nodes == std::vector<int>{0});
}

TEST_CASE("re-entrant components are split until convex") {
  Graph g = reentrant_pair();
  std::vector<CandidateRegion> cands = enumerate_candidates(g);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].nodes == std::vector<int>{g.find_node("A")});
  CHECK(cands[1].nodes == std::vector<int>{g.find_node("B")});

  // Collapsing both singletons under accept-all must stay a DAG.
  infer_shapes(g);
  PartitionedGraph part = prune_and_collapse(g, cands, accept_all_thresholds());
  CHECK_NOTHROW(topological_order(part.graph));
}

TEST_CASE("fully capable diamond is one convex candidate") {
  Graph g = testsupport::make_diamond();
  for (Node& n : g.nodes) n.supports_accel = true;
  std::vector<CandidateRegion> cands = enumerate_candidates(g);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].nodes == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("execution-order segmentation welds independent capable runs") {
  Graph g = testsupport::make_fragmented_transformer(1);
  std::vector<CandidateRegion> segs = naive_order_candidates(g);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].nodes == std::vector<int>{g.find_node("p1_0"), g.find_node("q1_0")});
  CHECK(segs[1].nodes == std::vector<int>{g.find_node("p3_0"), g.find_node("q3_0")});

  // The welded segments are not connected, yet accept-all collapse handles
  // them; that is exactly how the naive baseline serializes parallel arms.
  infer_shapes(g);
  PartitionedGraph part = prune_and_collapse(g, segs, accept_all_thresholds());
  CHECK(part.graph.nodes.size() == g.nodes.size() - 2);
  CHECK_NOTHROW(topological_order(part.graph));
}

TEST_CASE("heavy conv chain collapses to a single delegate") {
  Graph g = testsupport::make_acc_chain(5);
  infer_shapes(g);
  std::vector<CandidateRegion> cands = enumerate_candidates(g);
  REQUIRE(cands.size() == 1);
  PartitionedGraph part = prune_and_collapse(g, cands, DelegationThresholds{});

  REQUIRE(part.audit.size() == 1);
  const RegionDecision& dec = part.audit[0];
  CHECK(dec.accepted);
  CHECK(dec.reason == RejectReason::none);
  CHECK(dec.stats.node_count == 5);
  CHECK(dec.stats.macs > 1e9);
  CHECK(dec.delegate_id == "delegate_0");

  REQUIRE(part.graph.nodes.size() == 1);
  const Node& d = part.graph.nodes[0];
  CHECK(d.op == "Delegate");
  CHECK(d.op_class == OpClass::delegate_region);
  CHECK_FALSE(d.supports_cpu);
  CHECK(d.supports_accel);
  CHECK(d.attrs["macs"].get<double>() == doctest::Approx(dec.stats.macs));
  CHECK(d.attrs["node_count"].get<std::size_t>() == 5);
  // Only the region input and output cross the boundary.
  CHECK(part.graph.tensors.size() == 2);
  CHECK(part.delegate_members.at("delegate_0").size() == 5);
}

TEST_CASE("light regions are rejected with ordered reasons") {
  Graph g = testsupport::make_chain(4, 256);
  for (Node& n : g.nodes) n.supports_accel = true;
  infer_shapes(g);

  std::vector<CandidateRegion> cands = enumerate_candidates(g);
  REQUIRE(cands.size() == 1);
  PartitionedGraph part = prune_and_collapse(g, cands, DelegationThresholds{});
  REQUIRE(part.audit.size() == 1);
  CHECK_FALSE(part.audit[0].accepted);
  CHECK(part.audit[0].reason == RejectReason::too_little_compute);
  CHECK(part.graph.nodes.size() == 4);  // untouched

  DelegationThresholds strict;
  strict.min_nodes = 5;
  PartitionedGraph part2 = prune_and_collapse(g, cands, strict);
  CHECK(part2.audit[0].reason == RejectReason::too_few_nodes);
}

TEST_CASE("delegate ids avoid collisions with existing node ids") {
  Graph g = testsupport::make_acc_chain(5);
  g.nodes[0].id = "delegate_0";
  g.finalize();
  infer_shapes(g);
  PartitionedGraph part = prune_and_collapse(g, enumerate_candidates(g),
                                             DelegationThresholds{});
  REQUIRE(part.graph.nodes.size() == 1);
  CHECK(part.graph.nodes[0].id != "delegate_0");
  CHECK(part.delegate_members.count(part.graph.nodes[0].id) == 1);
}

TEST_CASE("collapse conserves nodes and boundary wiring") {
  Graph g = testsupport::make_fragmented_transformer(2);
  infer_shapes(g);
  PartitionedGraph part = prune_and_collapse(g, naive_order_candidates(g),
                                             accept_all_thresholds());
  std::size_t collapsed = 0;
  for (const auto& [id, members] : part.delegate_members) collapsed += members.size();
  CHECK(part.graph.nodes.size() + collapsed - part.delegate_members.size() ==
        g.nodes.size());

  int d1 = part.graph.find_node("delegate_0");
  REQUIRE(d1 >= 0);
  const Node& d = part.graph.nodes[d1];
  // Boundary inputs keep first-occurrence order: activation, then weights.
  REQUIRE(d.inputs.size() == 3);
  CHECK(part.graph.tensors[d.inputs[0]].id == "a_0_out");
  CHECK(part.graph.tensors[d.inputs[1]].id == "w_p1_0");
  CHECK(part.graph.tensors[d.inputs[2]].id == "w_q1_0");
  REQUIRE(d.outputs.size() == 2);
  CHECK(part.graph.tensors[d.outputs[0]].id == "p1_0_out");
  CHECK(part.graph.tensors[d.outputs[1]].id == "q1_0_out");
}

TEST_CASE("random graphs survive both partitioners") {
  std::mt19937 rng(777u);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g = testsupport::random_dag(rng, 60, 0.5, 0.05);
    infer_shapes(g);
    for (const auto& cands :
         {enumerate_candidates(g), naive_order_candidates(g)}) {
      PartitionedGraph part = prune_and_collapse(g, cands, DelegationThresholds{});
      CHECK_NOTHROW(topological_order(part.graph));
      PartitionedGraph all = prune_and_collapse(g, cands, accept_all_thresholds());
      CHECK_NOTHROW(topological_order(all.graph));

      std::set<std::string> seen;
      for (const Node& n : all.graph.nodes) {
        CHECK(seen.insert(n.id).second);
        if (n.op_class != OpClass::delegate_region)
          CHECK(g.find_node(n.id) >= 0);
      }
    }
  }
}

TEST_CASE("audit serializes one record per candidate") {
  Graph g = testsupport::make_acc_chain(5);
  infer_shapes(g);
  PartitionedGraph part = prune_and_collapse(g, enumerate_candidates(g),
                                             DelegationThresholds{});
  nlohmann::json audit = audit_json(part.audit);
  REQUIRE(audit.is_array());
  REQUIRE(audit.size() == 1);
  CHECK(audit[0]["decision"] == "accepted");
  CHECK(audit[0]["node_count"] == 5);
  CHECK(audit[0]["delegate"] == "delegate_0");
  CHECK(audit[0]["nodes"].size() == 5);
}
