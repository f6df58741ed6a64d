#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "ceg/oracle.hpp"
#include "ceg/staging.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ceg;

namespace {

std::set<std::set<std::string>> blocks_by_id(const EventTree& t, const PositionPartition& p) {
  std::set<std::set<std::string>> out;
  for (const auto& b : p.blocks) {
    std::set<std::string> ids;
    for (VertexId v : b) ids.insert(t.vertex(v).id);
    out.insert(ids);
  }
  return out;
}

/// Brute-force coloured subtree isomorphism: tries every matching of child edges.
bool isomorphic(const EventTree& t, const StagePartition& s, VertexId a, VertexId b) {
  if (t.is_leaf(a) || t.is_leaf(b)) return t.is_leaf(a) && t.is_leaf(b);
  const auto sa = s.stage_of(t.vertex(a).id);
  const auto sb = s.stage_of(t.vertex(b).id);
  if (!sa || !sb || *sa != *sb) {
    if (a != b) return false;
  }
  auto ea = std::vector<EdgeId>(t.out_edges(a).begin(), t.out_edges(a).end());
  auto eb = std::vector<EdgeId>(t.out_edges(b).begin(), t.out_edges(b).end());
  if (ea.size() != eb.size()) return false;
  std::sort(eb.begin(), eb.end());
  do {
    bool ok = true;
    for (std::size_t i = 0; ok && i < ea.size(); ++i) {
      const Edge& x = t.edge(ea[i]);
      const Edge& y = t.edge(eb[i]);
      ok = x.label == y.label && x.prob.value() == y.prob.value() && x.cluster == y.cluster &&
           x.holding == y.holding && x.cyclic == y.cyclic && isomorphic(t, s, x.to, y.to);
    }
    if (ok) return true;
  } while (std::next_permutation(eb.begin(), eb.end()));
  return false;
}

EventTree complete_binary(int depth, StagePartition& stages) {
  EventTree t;
  t.add_vertex({.id = "n0"});
  t.set_root(0);
  std::vector<VertexId> frontier{0};
  int counter = 1;
  for (int d = 0; d < depth; ++d) {
    std::vector<VertexId> next;
    for (VertexId v : frontier) {
      stages.stages["all"].push_back(t.vertex(v).id);
      for (const char* label : {"a", "b"}) {
        const VertexId c = t.add_vertex({.id = "n" + std::to_string(counter++)});
        Edge e;
        e.from = v;
        e.to = c;
        e.label = label;
        e.prob = Decimal::parse(label[0] == 'a' ? "0.25" : "0.75");
        t.add_edge(e);
        next.push_back(c);
      }
    }
    frontier = next;
  }
  return t;
}

/// Probability of each label sequence from the root to a leaf or the sink.
std::map<std::vector<std::string>, double> label_measure(const Digraph& g, VertexId root) {
  std::map<std::vector<std::string>, double> out;
  std::vector<std::string> labels;
  std::function<void(VertexId, double)> rec = [&](VertexId v, double p) {
    if (g.out_edges(v).empty()) {
      out[labels] += p;
      return;
    }
    for (EdgeId e : g.out_edges(v)) {
      labels.push_back(g.edge(e).label);
      if (g.edge(e).cyclic) {
        out[labels] += p * g.edge(e).prob.value();
      } else {
        rec(g.edge(e).to, p * g.edge(e).prob.value());
      }
      labels.pop_back();
    }
  };
  rec(root, 1.0);
  return out;
}

}  // namespace

TEST_CASE("example 1 positions merge the stage pairs") {
  const auto doc = test::load("example1_tree.json");
  const auto p = compute_positions(doc.tree, doc.stages);
  const std::set<std::set<std::string>> expected{
      {"v0"}, {"v1", "v2"}, {"v3"}, {"v4", "v6"}, {"v5", "v7"}};
  CHECK(blocks_by_id(doc.tree, p) == expected);
}

TEST_CASE("positions refine stages") {
  const auto doc = test::load("example1_tree.json");
  const auto p = compute_positions(doc.tree, doc.stages);
  std::size_t covered = 0;
  for (const auto& b : p.blocks) {
    covered += b.size();
    std::set<std::optional<std::string>> stages;
    for (VertexId v : b) stages.insert(doc.stages.stage_of(doc.tree.vertex(v).id));
    CHECK(stages.size() == 1);
  }
  CHECK(covered == doc.tree.situations().size());
}

TEST_CASE("uncoloured tree with distinct labels keeps every situation apart") {
  auto doc = test::load("example1_tree.json");
  for (EdgeId e = 0; e < doc.tree.edge_count(); ++e) {
    doc.tree.mutable_edge(e).label += "_" + std::to_string(e);
    doc.tree.mutable_edge(e).cluster.reset();
  }
  const auto p = compute_positions(doc.tree, {});
  CHECK(p.blocks.size() == doc.tree.situations().size());
}

TEST_CASE("complete binary tree positions agree with brute-force isomorphism") {
  StagePartition stages;
  const auto t = complete_binary(3, stages);
  const auto p = compute_positions(t, stages);
  const auto sits = t.situations();
  for (VertexId a : sits) {
    for (VertexId b : sits) {
      CAPTURE(t.vertex(a).id);
      CAPTURE(t.vertex(b).id);
      CHECK((p.block_of[a] == p.block_of[b]) == isomorphic(t, stages, a, b));
    }
  }
  CHECK(p.blocks.size() == 3);
}

TEST_CASE("example 1 compiles to five positions and a sink") {
  const auto doc = test::load("example1_tree.json");
  const auto g = compile_ceg(doc.tree, compute_positions(doc.tree, doc.stages), doc.stages);
  CHECK(g.vertex_count() == 6);
  CHECK(validate(g).ok());
  std::set<std::set<std::string>> members;
  for (const auto& v : g.vertices()) {
    if (!v.members.empty()) members.insert({v.members.begin(), v.members.end()});
  }
  const std::set<std::set<std::string>> expected{
      {"v0"}, {"v1", "v2"}, {"v3"}, {"v4", "v6"}, {"v5", "v7"}};
  CHECK(members == expected);
  // Each stage of example 1 is a single position, so no colour survives.
  for (const auto& v : g.vertices()) CHECK_FALSE(v.stage);
  CHECK(label_measure(doc.tree, doc.tree.root()) == label_measure(g, g.root()));
}

TEST_CASE("example 2 slice template compiles to the dynamic graph") {
  const auto tree = test::load("example2_tree.json");
  const auto g = compile_ceg(tree.tree, compute_positions(tree.tree, tree.stages), tree.stages);
  const auto ref = test::load("example2.json").graph;
  REQUIRE(g.vertex_count() == ref.vertex_count());
  REQUIRE(g.edge_count() == ref.edge_count());
  for (const auto& e : ref.edges()) {
    CAPTURE(e.id);
    const auto mine = g.find_edge(e.id);
    REQUIRE(mine);
    const Edge& x = g.edge(*mine);
    CHECK(g.vertex(x.from).id == ref.vertex(e.from).id);
    CHECK(g.vertex(x.to).id == ref.vertex(e.to).id);
    CHECK(x.prob == e.prob);
    CHECK(x.holding == e.holding);
    CHECK(x.cyclic == e.cyclic);
  }
  std::size_t parallel = 0;
  for (EdgeId e : g.out_edges(g.root())) parallel += g.vertex(g.edge(e).to).id == "w1";
  CHECK(parallel == 2);
  CHECK(label_measure(tree.tree, tree.tree.root()) == label_measure(g, g.root()));
}

TEST_CASE("single path tree compiles to a path graph") {
  EventTree t;
  for (const char* id : {"a", "b", "c"}) t.add_vertex({.id = id});
  t.set_root(0);
  for (VertexId v = 0; v < 2; ++v) {
    Edge e;
    e.from = v;
    e.to = v + 1;
    e.label = "go";
    e.prob = Decimal::parse("1");
    t.add_edge(e);
  }
  const auto g = compile_ceg(t, compute_positions(t, {}), {});
  CHECK(g.vertex_count() == 3);
  CHECK(g.edge_count() == 2);
  CHECK(enumerate_paths(g).rows.size() == 1);
}

TEST_CASE("stage colours survive only across positions") {
  // Two stage-mates whose subtrees differ below: same stage, different positions.
  EventTree t;
  for (const char* id : {"r", "x", "y", "x1", "y1", "l1", "l2", "l3", "l4", "l5"}) t.add_vertex({.id = id});
  t.set_root(0);
  auto edge = [&](const char* f, const char* to, const char* label, const char* p) {
    Edge e;
    e.from = t.vertex_index(f);
    e.to = t.vertex_index(to);
    e.label = label;
    e.prob = Decimal::parse(p);
    t.add_edge(e);
  };
  edge("r", "x", "a", "0.5");
  edge("r", "y", "b", "0.5");
  edge("x", "x1", "go", "0.3");
  edge("x", "l1", "stop", "0.7");
  edge("y", "y1", "go", "0.3");
  edge("y", "l2", "stop", "0.7");
  edge("x1", "l3", "end", "1");
  edge("y1", "l4", "left", "0.5");
  edge("y1", "l5", "right", "0.5");
  StagePartition s;
  s.stages["u"] = {"x", "y"};
  const auto g = compile_ceg(t, compute_positions(t, s), s);
  int coloured = 0;
  for (const auto& v : g.vertices()) coloured += v.stage == std::optional<std::string>("u");
  CHECK(coloured == 2);
}

TEST_CASE("compiled graphs are already minimal") {
  for (const char* name : {"example1_tree.json", "example2_tree.json"}) {
    const auto doc = test::load(name);
    const auto g = compile_ceg(doc.tree, compute_positions(doc.tree, doc.stages), doc.stages);
    CegGraph acyclic = unroll(g, 1, 0);
    const auto m = minimize(acyclic);
    CHECK(m.vertex_count() == acyclic.vertex_count());
    CHECK(m.edge_count() == acyclic.edge_count());
  }
}

TEST_CASE("minimize merges duplicated coloured subgraphs") {
  CegGraph g;
  for (const char* id : {"r", "p", "q", "s"}) g.add_vertex({.id = id});
  g.set_root(0);
  g.set_sink(3);
  g.mutable_vertex(1).stage = "u";
  g.mutable_vertex(2).stage = "u";
  auto edge = [&](VertexId f, VertexId to, const char* label, const char* p) {
    Edge e;
    e.from = f;
    e.to = to;
    e.label = label;
    e.prob = Decimal::parse(p);
    e.holding = HoldingTimeSpec::exponential(1);
    g.add_edge(e);
  };
  edge(0, 1, "a", "0.4");
  edge(0, 2, "b", "0.6");
  edge(1, 3, "x", "0.5");
  edge(1, 3, "y", "0.5");
  edge(2, 3, "x", "0.5");
  edge(2, 3, "y", "0.5");
  const auto before = enumerate_paths(g);
  const auto m = minimize(g);
  CHECK(m.vertex_count() == 3);
  const auto after = enumerate_paths(m);
  CHECK(before.rows.size() == after.rows.size());
  CHECK(label_measure(g, g.root()) == label_measure(m, m.root()));
  const auto mm = minimize(m);
  CHECK(mm.vertex_count() == m.vertex_count());
  CHECK(mm.edge_count() == m.edge_count());
}

TEST_CASE("minimize leaves a single edge graph alone") {
  CegGraph g;
  g.add_vertex({.id = "r"});
  g.add_vertex({.id = "s"});
  g.set_root(0);
  g.set_sink(1);
  Edge e;
  e.from = 0;
  e.to = 1;
  e.label = "go";
  e.prob = Decimal::parse("1");
  g.add_edge(e);
  const auto m = minimize(g);
  CHECK(m.vertex_count() == 2);
  CHECK(m.edge_count() == 1);
  CHECK(m.edge(0).id == g.edge(0).id);
}

TEST_CASE("dot export shows colours and probabilities") {
  const auto doc = test::load("example1_tree.json");
  const auto dot = to_dot(doc.tree, doc.stages);
  CHECK(dot.find("digraph tree") != std::string::npos);
  CHECK(dot.find("fillcolor=\"#") != std::string::npos);
  CHECK(dot.find("color=\"#") != std::string::npos);
  CHECK(dot.find("strain1 0.4") != std::string::npos);
  const auto g = test::load("example2.json").graph;
  const auto gd = to_dot(g);
  CHECK(gd.find("\"w0\" -> \"w1\"") != std::string::npos);
  CHECK(gd.find("style=dashed") != std::string::npos);
}
