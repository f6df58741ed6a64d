// One line per acceptance criterion. Exit status is zero when every
// criterion passes, or when criterion 2 fails only on the entry whose
// reference value is rounded to four decimals (see known_rounding_gap).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ceg/distributions.hpp"
#include "ceg/dynamic.hpp"
#include "ceg/error.hpp"
#include "ceg/io.hpp"
#include "ceg/oracle.hpp"
#include "ceg/propagation.hpp"

using namespace ceg;

namespace {

std::filesystem::path data_dir = CEG_DATA_DIR;

ModelDocument load(const std::string& name) { return load_model(data_dir / name); }
Evidence evidence(const std::string& name) { return load_evidence(data_dir / name); }

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
  /// |got - want| <= tol, recording the largest error seen.
  void near(double got, double want, double tol, const std::string& what) {
    const double err = std::abs(got - want);
    worst = std::max(worst, err);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s got %.8g want %.8g", what.c_str(), got, want);
    check(err <= tol, buf);
  }
  double worst = 0.0;
};

struct Criterion {
  int number;
  const char* title;
  double time_limit_s;  // zero when the criterion has no runtime bound
  std::function<Outcome()> run;
};

struct Example2Run {
  CegGraph graph;
  CegGraph transporter;
  PropagationResult result;

  Example2Run(const std::string& model, const std::string& ev_name) {
    graph = unroll(load(model).graph, 3, 0);
    const Evidence ev = evidence(ev_name);
    transporter = build_transporter(graph, ev);
    result = propagate(graph, transporter, ev);
  }
  double tpot(const std::string& e) const {
    return result.state.t_potential[transporter.edge_index(e + "@3")];
  }
  double hpot(const std::string& e) const {
    return result.state.h_potential[transporter.edge_index(e + "@3")];
  }
  double temph(const std::string& v) const {
    return result.state.t_emphasis[transporter.vertex_index(v + "@3")];
  }
  double hemph(const std::string& v) const {
    return result.state.h_emphasis[transporter.vertex_index(v + "@3")];
  }
};

Outcome criterion1() {
  Outcome o;
  const Example2Run ex("example2.json", "example2_evidence.json");
  o.near(ex.hpot("w0/strain1"), 0.01348, 1e-5, "h w0/strain1");
  o.near(ex.hpot("w0/strain2"), 0.00255, 1e-5, "h w0/strain2");
  o.near(ex.hpot("w1/treatment1"), 0.00443, 1e-5, "h w1/treatment1");
  o.near(ex.hpot("w1/treatment2"), 0.17603, 1e-5, "h w1/treatment2");
  o.near(ex.tpot("w3/recovered"), 0.73, 1e-5, "t w3/recovered");
  o.near(ex.tpot("w4/recovered"), 0.80, 1e-5, "t w4/recovered");
  o.near(ex.tpot("w1/treatment1"), 0.3285, 1e-5, "t w1/treatment1");
  o.near(ex.tpot("w1/treatment2"), 0.44, 1e-5, "t w1/treatment2");
  o.near(ex.tpot("w0/strain1"), 0.3074, 1e-5, "t w0/strain1");
  o.near(ex.tpot("w0/strain2"), 0.23055, 1e-5, "t w0/strain2");
  return o;
}

/// The reference gives Phi(w0) to four decimals; the exact value 0.7 * 0.7685
/// sits 5e-5 away from it, outside the 1e-5 tolerance.
bool known_rounding_gap(const Outcome& o, const Example2Run& ex) {
  if (o.failures.size() != 1 || o.failures.front().rfind("t-emphasis w0 ", 0) != 0) return false;
  const double exact = 0.4 * (0.45 * 0.73 + 0.55 * 0.80) + 0.3 * (0.45 * 0.73 + 0.55 * 0.80);
  return std::abs(ex.temph("w0") - exact) < 1e-12 && std::round(exact * 1e4) / 1e4 == 0.5380;
}

bool criterion2_gap = false;

Outcome criterion2() {
  Outcome o;
  const Example2Run ex("example2_table3.json", "example2_evidence.json");
  o.near(ex.temph("w3"), 0.73, 1e-5, "t-emphasis w3");
  o.near(ex.temph("w4"), 0.80, 1e-5, "t-emphasis w4");
  o.near(ex.temph("w1"), 0.7685, 1e-5, "t-emphasis w1");
  o.near(ex.temph("w0"), 0.5380, 1e-5, "t-emphasis w0");
  o.near(ex.hemph("w3"), 0.13013, 1e-5, "h-emphasis w3");
  o.near(ex.hemph("w4"), 0.73537, 1e-5, "h-emphasis w4");
  o.near(ex.hemph("w1"), 0.07891, 1e-5, "h-emphasis w1");
  o.near(ex.hemph("w0"), 0.00473, 1e-5, "h-emphasis w0");
  criterion2_gap = !o.pass && known_rounding_gap(o, ex);
  if (criterion2_gap) o.detail = "reference rounds Phi(w0) = 0.53795 to 0.5380";
  return o;
}

const double kTimedPosterior[] = {0.01615, 0.85944, 0.00230, 0.12211};
const double kPiStar[] = {0.24426, 0.32717, 0.18320, 0.24537};

Outcome criterion3() {
  Outcome o;
  const Example2Run ex("example2_table3.json", "example2_evidence.json");
  const auto timed = path_posteriors(ex.result.model);
  const auto graph = unroll(load("example2_table3.json").graph, 3, 0);
  const auto untimed = path_posteriors(propagate(graph, evidence("example2_evidence_untimed.json")).model);
  o.check(timed.size() == 4 && untimed.size() == 4, "four paths");
  if (!o.pass) return o;
  for (int i = 0; i < 4; ++i) {
    o.near(timed[i].probability, kTimedPosterior[i], 5e-4, "pi(lambda" + std::to_string(i + 1) + ")");
    o.near(untimed[i].probability, kPiStar[i], 5e-4, "pi*(lambda" + std::to_string(i + 1) + ")");
  }
  return o;
}

Outcome criterion4() {
  Outcome o;
  const Example2Run ex("example2_table3.json", "example2_evidence.json");
  const OpCounts& c = ex.result.state.ops;
  o.check(c.t_potentials == 8, "t-potentials");
  o.check(c.h_potentials == 8, "h-potentials");
  o.check(c.t_emphases == 5, "t-emphases");
  o.check(c.h_emphases == 5, "h-emphases");
  o.check(c.revised == 6, "revised");
  o.check(c.total() == 32, "total");
  o.detail = c.to_string();
  return o;
}

struct Corpus {
  std::vector<RandomCase> cases;
  Corpus() {
    std::mt19937_64 rng(20241014);
    for (int i = 0; i < 100; ++i) cases.push_back(random_case(rng));
  }
};

const Corpus& corpus() {
  static const Corpus c;
  return c;
}

/// Emphases against pi(E | reached w) and pi(E, H_w = t_w | reached w).
Outcome criterion5() {
  Outcome o;
  for (const auto& c : corpus().cases) {
    const auto oracle = posterior_by_enumeration(enumerate_paths(c.graph), c.evidence);
    const auto engine = propagate(c.graph, c.evidence);
    const auto& t = engine.model.transporter;
    for (VertexId v = 0; v < c.graph.vertex_count(); ++v) {
      if (v == c.graph.sink() || std::isnan(oracle.t_emphasis[v])) continue;
      const auto w = t.find_vertex(c.graph.vertex(v).id);
      o.check(w.has_value(), "vertex " + c.graph.vertex(v).id + " kept");
      if (!w) continue;
      o.near(engine.state.t_emphasis[*w], oracle.t_emphasis[v], 1e-9, "Phi " + c.graph.vertex(v).id);
      o.near(engine.state.h_emphasis[*w], oracle.h_emphasis[v], 1e-9, "Phi^t " + c.graph.vertex(v).id);
    }
  }
  return o;
}

std::string path_key(const CegGraph& g, const std::vector<EdgeId>& edges) {
  std::string key;
  for (EdgeId e : edges) key += g.edge(e).id + ";";
  return key;
}

std::string path_key(const std::vector<std::string>& ids) {
  std::string key;
  for (const auto& id : ids) key += id + ";";
  return key;
}

Outcome criterion6() {
  Outcome o;
  for (const auto& c : corpus().cases) {
    const auto table = enumerate_paths(c.graph);
    const auto oracle = posterior_by_enumeration(table, c.evidence);
    const auto engine = propagate(c.graph, c.evidence);
    const auto& t = engine.model.transporter;
    for (EdgeId e = 0; e < c.graph.edge_count(); ++e) {
      if (std::isnan(oracle.t_emphasis[c.graph.edge(e).from])) continue;
      const auto kept = t.find_edge(c.graph.edge(e).id);
      o.near(kept ? engine.model.revised[*kept] : 0.0, oracle.edge_posterior[e], 1e-9,
             "edge " + c.graph.edge(e).id);
    }
    std::map<std::string, double> mine;
    for (const auto& p : path_posteriors(engine.model)) mine[path_key(p.edges)] = p.probability;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto it = mine.find(path_key(c.graph, table.rows[r].edges));
      o.near(it == mine.end() ? 0.0 : it->second, oracle.path_posterior[r], 1e-9, "path");
    }
  }
  return o;
}

Outcome criterion7() {
  Outcome o;
  const CegGraph dceg = load("example2.json").graph;
  Evidence present;
  present.retained_edges.emplace();
  for (const char* e : {"w0/strain1", "w0/strain2", "w1/treatment1", "w1/treatment2", "w3/recovered",
                        "w4/recovered"}) {
    present.retained_edges->push_back(std::string(e) + "@3");
  }
  present.holding_times = std::vector<std::optional<double>>{2.5, 4.0, 4.5};
  const auto old = split(dceg, present, 3, 0);

  // Slice 2: the earlier infection was strain 1.
  Evidence added;
  added.excluded_edges = {"w0/strain2@2", "w0/strain3@2"};
  const auto ext = extend_present_with_past(old, added, 2);

  const auto window = unroll(dceg, 2, 1);
  Evidence full;
  full.retained_edges.emplace();
  for (const auto& e : window.edges()) {
    if (e.id.ends_with("@2") && e.id != "w0/strain2@2" && e.id != "w0/strain3@2") {
      full.retained_edges->push_back(e.id);
    }
  }
  for (const auto& id : *present.retained_edges) full.retained_edges->push_back(id);
  full.holding_times =
      std::vector<std::optional<double>>{std::nullopt, std::nullopt, std::nullopt, 2.5, 4.0, 4.5};
  const auto direct = propagate(window, full);

  const auto& a = ext.present.model.transporter;
  const auto& b = direct.model.transporter;
  o.check(a.edge_count() == b.edge_count() && a.vertex_count() == b.vertex_count(), "same transporter");
  for (EdgeId e = 0; e < b.edge_count(); ++e) {
    const auto mine = a.find_edge(b.edge(e).id);
    o.check(mine.has_value(), "edge " + b.edge(e).id);
    if (mine) o.near(ext.present.model.revised[*mine], direct.model.revised[e], 1e-12, b.edge(e).id);
  }
  for (VertexId v = 0; v < b.vertex_count(); ++v) {
    const auto w = a.find_vertex(b.vertex(v).id);
    o.check(w.has_value(), "vertex " + b.vertex(v).id);
    if (!w) continue;
    o.near(ext.present.state.t_emphasis[*w], direct.state.t_emphasis[v], 1e-12, "Phi " + b.vertex(v).id);
    o.near(ext.present.state.h_emphasis[*w], direct.state.h_emphasis[v], 1e-12, "Phi^t " + b.vertex(v).id);
  }
  o.detail = "extend ops " + std::to_string(ext.present.state.ops.total()) + " vs full " +
             std::to_string(direct.state.ops.total());
  return o;
}

Outcome criterion8() {
  Outcome o;
  const CegGraph dceg = load("example2.json").graph;
  const auto revised = revise_future(dceg, evidence("example2_future_no_strain3.json"));
  const auto& g = revised.adapted;
  o.check(g.edge(g.edge_index("w0/strain1")).prob.value() == 4.0 / 7.0, "strain1 = 4/7");
  o.check(g.edge(g.edge_index("w0/strain2")).prob.value() == 3.0 / 7.0, "strain2 = 3/7");
  o.check(!g.find_edge("w0/strain3"), "strain3 removed");

  for (const SmpModel* smp : {&revised}) {
    for (const auto& row : smp->transition) {
      double s = 0;
      for (double p : row) s += p;
      o.check(std::abs(s - 1.0) <= 1e-9, "row sum");
    }
  }
  const auto fig8 = revise_future(dceg, Evidence{});
  for (const auto& row : fig8.transition) {
    double s = 0;
    for (double p : row) s += p;
    o.check(std::abs(s - 1.0) <= 1e-9, "row sum");
  }
  // Expected SMP: w0 -> {w1, w2}; w1 -> {w3, w4}; w2, w3, w4 -> {w0, w_inf}; w_inf absorbing.
  const std::map<std::string, std::vector<std::string>> topology = {
      {"w0", {"w1", "w2"}},       {"w1", {"w3", "w4"}},       {"w2", {"w0", "w_inf"}},
      {"w3", {"w0", "w_inf"}},    {"w4", {"w0", "w_inf"}},    {"w_inf", {"w_inf"}}};
  o.check(fig8.size() == topology.size(), "six states");
  for (const auto& [from, succ] : topology) {
    const auto i = fig8.state_index(from);
    std::vector<std::string> got;
    for (std::size_t j = 0; j < fig8.size(); ++j) {
      if (fig8.transition[i][j] > 0.0) got.push_back(fig8.states[j]);
    }
    o.check(got == succ, "successors of " + from);
  }
  const auto& mix = fig8.holding[fig8.state_index("w0")][fig8.state_index("w1")];
  o.check(mix.components.size() == 2, "w0 -> w1 mixture has two components");
  if (mix.components.size() == 2) {
    o.near(mix.components[0].first, 4.0 / 7.0, 1e-15, "mixture weight strain1");
    o.near(mix.components[1].first, 3.0 / 7.0, 1e-15, "mixture weight strain2");
    o.check(mix.components[0].second == HoldingTimeSpec::exponential(2), "strain1 holding");
    o.check(mix.components[1].second == HoldingTimeSpec::exponential(2.8), "strain2 holding");
  }
  o.near(fig8.transition[fig8.state_index("w0")][fig8.state_index("w1")], 0.7, 1e-15, "w0 -> w1");
  o.check(fig8.absorbing[fig8.state_index("w_inf")] != 0, "w_inf absorbing");
  return o;
}

Outcome criterion9() {
  Outcome o;
  CegGraph g = unroll(load("example3_mixed.json").graph, 1, 0);
  // Specs left on untimed edges must be ignored.
  CegGraph decorated = g;
  for (EdgeId e = 0; e < decorated.edge_count(); ++e) {
    if (!decorated.vertex(decorated.edge(e).from).timed) {
      decorated.mutable_edge(e).holding = HoldingTimeSpec::exponential(5);
    }
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    if (!g.vertex(g.edge(e).from).timed) g.mutable_edge(e).holding.reset();
  }
  Evidence ev;
  ev.excluded_edges = {"w6/not_treated@1", "w0/residential@1"};
  ev.vertex_holds = {{"w4@1", 30.0}, {"w5@1", 20.0}, {"w7@1", 50.0}};
  Evidence untimed = ev;
  untimed.vertex_holds.clear();

  const auto timed_run = propagate(g, ev);
  const auto plain_run = propagate(g, untimed);
  const auto decorated_run = propagate(decorated, ev);
  const auto oracle = posterior_by_enumeration(enumerate_paths(g), ev);
  const auto& t = timed_run.model.transporter;
  std::size_t n_untimed = 0, n_timed = 0;
  for (EdgeId e = 0; e < t.edge_count(); ++e) {
    const Edge& edge = t.edge(e);
    const std::string& id = edge.id;
    const double mine = timed_run.model.revised[e];
    o.near(mine, oracle.edge_posterior[g.edge_index(id)], 1e-9, "oracle " + id);
    o.near(decorated_run.model.revised_probability(id), mine, 1e-15, "specs ignored " + id);
    const VertexId w = edge.from;
    if (!t.vertex(w).timed) {
      ++n_untimed;
      o.near(mine, plain_run.model.revised_probability(id), 1e-12, "untimed rule " + id);
      o.near(timed_run.state.h_potential[e], 1.0, 0.0, "h = 1 " + id);
    } else {
      ++n_timed;
      const double hold = ev.vertex_holds.at(t.vertex(w).id);
      const double expected = edge.prob.value() * timed_run.state.t_emphasis[edge.to] *
                              density(*edge.holding, hold) / timed_run.state.h_emphasis[w];
      o.near(mine, expected, 1e-12, "timed rule " + id);
    }
  }
  o.check(n_untimed > 0 && n_timed > 0, "both vertex kinds exercised");
  return o;
}

Outcome criterion10() {
  Outcome o;
  const CegGraph g = unroll(load("example2.json").graph, 3, 0);
  const Evidence ev = evidence("example2_evidence_untimed.json");
  const auto table = enumerate_paths(g);
  std::map<std::string, int> index;
  const auto transporter = build_transporter(g, ev);
  const auto posterior = path_posteriors(propagate(g, transporter, ev).model);
  for (std::size_t i = 0; i < posterior.size(); ++i) index[path_key(posterior[i].edges)] = static_cast<int>(i);

  const std::size_t n = 100000;
  const auto walks = simulate(g, n, 2024);
  std::vector<double> counts(posterior.size(), 0.0);
  double accepted = 0;
  for (const auto& w : walks) {
    PathRow row{w.edges, 0.0};
    if (!path_consistent(table, row, ev)) continue;
    accepted += 1;
    counts[index.at(path_key(g, w.edges))] += 1;
  }
  o.check(posterior.size() == 4, "four paths");
  o.check(accepted > 0, "some trajectories accepted");
  if (!o.pass) return o;
  double worst_z = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = kPiStar[i];
    const double freq = counts[i] / accepted;
    const double se = std::sqrt(p * (1 - p) / accepted);
    worst_z = std::max(worst_z, std::abs(freq - p) / se);
    o.near(freq, p, 3 * se, "frequency lambda" + std::to_string(i + 1));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.0f of %zu accepted, max |z| %.2f", accepted, n, worst_z);
  o.detail = buf;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) data_dir = argv[1];
  const std::vector<Criterion> criteria = {
      {1, "edge potentials of the worked example", 1.0, criterion1},
      {2, "vertex emphases of the worked example", 1.0, criterion2},
      {3, "path posteriors with and without times", 1.0, criterion3},
      {4, "operation count 8+8+5+5+6", 0.0, criterion4},
      {5, "emphases vs enumeration, 100 random models", 60.0, criterion5},
      {6, "revised probabilities vs enumeration, 100 random models", 0.0, criterion6},
      {7, "extend equals full re-propagation", 0.0, criterion7},
      {8, "future model revision and SMP topology", 0.0, criterion8},
      {9, "mixed CEG timed and untimed rules", 0.0, criterion9},
      {10, "simulation reproduces pi*", 0.0, criterion10},
  };
  int unexpected = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.failures.push_back("runtime " + std::to_string(secs) + " s over " + std::to_string(c.time_limit_s) + " s");
    }
    std::printf("%s %2d %s (max err %.3g, %.3f s)", o.pass ? "PASS" : "FAIL", c.number, c.title, o.worst, secs);
    if (!o.detail.empty()) std::printf(" [%s]", o.detail.c_str());
    std::printf("\n");
    for (const auto& f : o.failures) std::printf("     - %s\n", f.c_str());
    if (!o.pass && !(c.number == 2 && criterion2_gap)) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
