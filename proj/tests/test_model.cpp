#include <cmath>

#include "ceg/error.hpp"
#include "ceg/io.hpp"
#include "ceg/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ceg;

namespace {

EventTree two_level_tree(const char* p_a, const char* p_b) {
  EventTree t;
  for (const char* id : {"r", "x", "y"}) t.add_vertex({.id = id});
  t.set_root(0);
  Edge a;
  a.from = 0;
  a.to = 1;
  a.label = "a";
  a.prob = Decimal::parse(p_a);
  t.add_edge(a);
  Edge b = a;
  b.to = 2;
  b.label = "b";
  b.prob = Decimal::parse(p_b);
  t.add_edge(b);
  return t;
}

}  // namespace

TEST_CASE("decimal keeps its text") {
  const auto d = Decimal::parse(" 0.30 ");
  CHECK(d.text() == "0.30");
  CHECK(d.value() == doctest::Approx(0.3));
  CHECK_THROWS_AS(Decimal::parse("abc"), std::invalid_argument);
  CHECK_THROWS_AS(Decimal::parse("inf"), std::invalid_argument);
  CHECK(Decimal::from_double(0.1).text() == "0.1");
}

TEST_CASE("example 1 tree validates against its stages") {
  const auto doc = test::load("example1_tree.json");
  REQUIRE(doc.kind == ModelDocument::Kind::event_tree);
  const auto report = validate(doc.tree, doc.stages);
  INFO(report.to_string());
  CHECK(report.ok());
  CHECK(doc.tree.situations().size() == 8);
}

TEST_CASE("leaves behind cyclic tree edges are reachable") {
  const auto doc = test::load("example2_tree.json");
  const auto report = validate(doc.tree, doc.stages);
  INFO(report.to_string());
  CHECK(report.ok());
}

TEST_CASE("probability deficit is reported with the situation") {
  const auto t = two_level_tree("0.5", "0.4");
  const auto report = validate(t, {});
  REQUIRE(report.violations.size() == 1);
  const auto& v = report.violations.front();
  CHECK(v.kind == Violation::Kind::probability_sum);
  CHECK(v.subjects == std::vector<std::string>{"r"});
  CHECK(v.deficit == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("stage members with different out-degrees are a staging violation") {
  EventTree t;
  for (const char* id : {"r", "x", "y", "l1", "l2", "l3"}) t.add_vertex({.id = id});
  t.set_root(0);
  auto edge = [&](VertexId f, VertexId to, const char* label, const char* p) {
    Edge e;
    e.from = f;
    e.to = to;
    e.label = label;
    e.prob = Decimal::parse(p);
    t.add_edge(e);
  };
  edge(0, 1, "a", "0.5");
  edge(0, 2, "b", "0.5");
  edge(1, 3, "a", "1");
  edge(2, 4, "a", "0.5");
  edge(2, 5, "b", "0.5");
  StagePartition s;
  s.stages["u"] = {"x", "y"};
  const auto report = validate(t, s);
  bool found = false;
  for (const auto& v : report.violations) {
    if (v.kind != Violation::Kind::staging) continue;
    found = std::find(v.subjects.begin(), v.subjects.end(), "x") != v.subjects.end() &&
            std::find(v.subjects.begin(), v.subjects.end(), "y") != v.subjects.end();
  }
  CHECK(found);
}

TEST_CASE("example 2 loads as a graph with six vertices") {
  const auto doc = test::load("example2.json");
  REQUIRE(doc.kind == ModelDocument::Kind::ceg);
  const auto& g = doc.graph;
  CHECK(g.vertex_count() == 6);
  for (const char* id : {"w0", "w1", "w2", "w3", "w4", "w_inf"}) CHECK(g.find_vertex(id));
  CHECK(g.vertex(g.sink()).id == "w_inf");
  CHECK(g.has_cyclic_edges());
  const auto report = validate(g);
  INFO(report.to_string());
  CHECK(report.ok());
}

TEST_CASE("empty vertex list is a parse error about the root") {
  try {
    parse_model(R"({"vertices": [], "edges": []})");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.path() == "/vertices");
    CHECK(std::string(e.what()).find("no root") != std::string::npos);
  }
}

TEST_CASE("unknown family is named in the parse error") {
  const char* doc = R"({"vertices": ["a", "b"], "edges": [
      {"from": "a", "to": "b", "label": "x", "prob": "1",
       "holding": {"family": "gamma", "params": ["2", "1"]}}]})";
  try {
    parse_model(doc);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.path() == "/edges/0/holding/family");
    CHECK(std::string(e.what()).find("gamma") != std::string::npos);
  }
}

TEST_CASE("schema errors carry the offending path") {
  CHECK_THROWS_WITH_AS(parse_model(R"({"vertices": ["a"], "edges": [{"from": "a"}]})"),
                       doctest::Contains("/edges/0/to"), ParseError);
  CHECK_THROWS_WITH_AS(parse_model(R"({"vertices": ["a", "b"], "edges": [
      {"from": "a", "to": "b", "label": "x", "prob": "zero"}]})"),
                       doctest::Contains("/edges/0/prob"), ParseError);
  CHECK_THROWS_AS(parse_model("{"), ParseError);
}

TEST_CASE("save and load round-trip is stable and exact") {
  for (const char* name : {"example1_tree.json", "example2.json", "example2_table3.json",
                           "example3_mixed.json", "example2_tree.json"}) {
    const std::string file = name;
    CAPTURE(file);
    const auto doc = test::load(file);
    const std::string once = save_model(doc);
    const auto again = parse_model(once);
    CHECK(save_model(again) == once);
    const Digraph& a = doc.digraph();
    const Digraph& b = again.digraph();
    REQUIRE(a.edge_count() == b.edge_count());
    for (EdgeId e = 0; e < a.edge_count(); ++e) {
      CHECK(a.edge(e).prob.text() == b.edge(e).prob.text());
      CHECK(a.edge(e).prob.value() == b.edge(e).prob.value());
      CHECK(a.edge(e).holding == b.edge(e).holding);
      CHECK(a.edge(e).cluster == b.edge(e).cluster);
      CHECK(a.edge(e).cyclic == b.edge(e).cyclic);
    }
    for (VertexId v = 0; v < a.vertex_count(); ++v) CHECK(a.vertex(v).timed == b.vertex(v).timed);
  }
}

TEST_CASE("cluster members must share one holding spec") {
  auto doc = test::load("example1_tree.json");
  auto& e = doc.tree.mutable_edge(doc.tree.edge_index("v2/treatment1"));
  e.holding = HoldingTimeSpec::normal(7, 2);
  const auto report = validate(doc.tree, doc.stages);
  bool found = false;
  for (const auto& v : report.violations) found = found || v.kind == Violation::Kind::cluster;
  CHECK(found);
}

TEST_CASE("graph validation flags vertices that cannot reach the sink") {
  CegGraph g;
  for (const char* id : {"r", "dead", "s"}) g.add_vertex({.id = id});
  g.set_root(0);
  g.set_sink(2);
  Edge a;
  a.from = 0;
  a.to = 2;
  a.label = "a";
  a.prob = Decimal::parse("0.5");
  g.add_edge(a);
  Edge b = a;
  b.to = 1;
  b.label = "b";
  g.add_edge(b);
  const auto report = validate(g);
  bool found = false;
  for (const auto& v : report.violations) found = found || v.kind == Violation::Kind::unreachable;
  CHECK(found);
}

TEST_CASE("evidence documents parse times into holds") {
  const auto ev = test::evidence("example2_evidence.json");
  REQUIRE(ev.holding_times);
  REQUIRE(ev.holding_times->size() == 3);
  CHECK((*ev.holding_times)[0].value() == doctest::Approx(2.5));
  CHECK((*ev.holding_times)[1].value() == doctest::Approx(4.0));
  CHECK((*ev.holding_times)[2].value() == doctest::Approx(4.5));
  CHECK(ev.retained_edges->size() == 6);

  const auto gaps = parse_evidence(R"({"times": [1, null, 4, 6]})");
  REQUIRE(gaps.holding_times->size() == 4);
  CHECK((*gaps.holding_times)[0].value() == 1.0);
  CHECK_FALSE((*gaps.holding_times)[1]);
  CHECK_FALSE((*gaps.holding_times)[2]);
  CHECK((*gaps.holding_times)[3].value() == 2.0);

  CHECK_THROWS_WITH_AS(parse_evidence(R"({"times": [2, 1]})"), doctest::Contains("/times"),
                       ParseError);
  const auto back = parse_evidence(save_evidence(ev));
  CHECK(back.holding_times == ev.holding_times);
  CHECK(back.retained_edges == ev.retained_edges);
}
