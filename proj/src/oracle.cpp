#include "ceg/oracle.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "ceg/distributions.hpp"
#include "ceg/error.hpp"

namespace ceg {

double PathTable::total_prior() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.prior;
  return s;
}

PathTable enumerate_paths(const CegGraph& graph, std::size_t max_paths) {
  if (graph.has_cyclic_edges()) throw StructuralError("path enumeration needs an acyclic graph");
  PathTable table;
  table.graph = graph;
  std::vector<EdgeId> stack;
  std::function<void(VertexId, double)> dfs = [&](VertexId v, double p) {
    if (v == graph.sink()) {
      if (table.rows.size() >= max_paths) {
        throw CapacityError("graph has more than " + std::to_string(max_paths) + " root-to-sink paths");
      }
      table.rows.push_back({stack, p});
      return;
    }
    for (EdgeId e : graph.out_edges(v)) {
      stack.push_back(e);
      dfs(graph.edge(e).to, p * graph.edge(e).prob.value());
      stack.pop_back();
    }
  };
  dfs(graph.root(), 1.0);
  return table;
}

namespace {

bool edge_allowed(const Edge& e, const Evidence& ev) {
  if (!(e.prob.value() > 0.0)) return false;
  if (ev.retained_edges) {
    bool found = false;
    for (const auto& id : *ev.retained_edges) found = found || edge_id_matches(id, e.id);
    if (!found) return false;
  }
  for (const auto& id : ev.excluded_edges) {
    if (edge_id_matches(id, e.id)) return false;
  }
  return true;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::optional<double> evidence_hold(const Evidence& evidence, const Vertex& vertex,
                                    std::size_t depth) {
  if (!vertex.timed) return std::nullopt;
  if (auto it = evidence.vertex_holds.find(vertex.id); it != evidence.vertex_holds.end()) {
    return it->second;
  }
  if (evidence.holding_times && depth < evidence.holding_times->size()) {
    return (*evidence.holding_times)[depth];
  }
  return std::nullopt;
}

bool path_consistent(const PathTable& table, const PathRow& row, const Evidence& evidence) {
  for (EdgeId e : row.edges) {
    if (!edge_allowed(table.graph.edge(e), evidence)) return false;
  }
  if (evidence.holding_times) {
    const std::size_t d = evidence.holding_times->size();
    if (evidence.path_length_known ? row.edges.size() != d : row.edges.size() < d) return false;
  }
  return true;
}

namespace {

/// Holding-density factor of step i of a row.
double step_factor(const CegGraph& g, const PathRow& row, std::size_t i, const Evidence& ev) {
  const Edge& e = g.edge(row.edges[i]);
  const auto hold = evidence_hold(ev, g.vertex(e.from), i);
  if (!hold) return 1.0;
  if (!e.holding) throw IncompleteModelError("edge '" + e.id + "' has no holding-time spec");
  return density(*e.holding, *hold);
}

}  // namespace

OraclePosterior posterior_by_enumeration(const PathTable& table, const Evidence& evidence) {
  const CegGraph& g = table.graph;
  const std::size_t n = g.vertex_count();
  OraclePosterior out;
  out.edge_posterior.assign(g.edge_count(), 0.0);
  out.t_emphasis.assign(n, kNaN);
  out.h_emphasis.assign(n, kNaN);
  out.path_posterior.assign(table.rows.size(), 0.0);
  out.consistent.assign(table.rows.size(), 0);

  std::vector<std::set<std::size_t>> depths(n);
  std::vector<double> num(n, 0.0), num_t(n, 0.0), edge_num(g.edge_count(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const PathRow& row = table.rows[r];
    if (!path_consistent(table, row, evidence)) continue;
    out.consistent[r] = 1;
    total += row.prior;
    for (std::size_t i = 0; i < row.edges.size(); ++i) {
      const VertexId w = g.edge(row.edges[i]).from;
      depths[w].insert(i);
      const double f = step_factor(g, row, i, evidence);
      num[w] += row.prior;
      num_t[w] += row.prior * f;
      edge_num[row.edges[i]] += row.prior * f;
    }
  }
  if (!(total > 0.0)) throw ZeroSupportError("no path consistent with the evidence has positive probability");
  const std::size_t known = evidence.holding_times ? evidence.holding_times->size() : 0;
  for (VertexId w = 0; w < n; ++w) {
    if (depths[w].size() > 1 && *depths[w].begin() < known) {
      throw NonIntrinsicEvidenceError("vertex '" + g.vertex(w).id +
                                      "' lies at several depths on consistent paths");
    }
  }

  // Arrivals at w by a route the evidence allows, at the depth consistent paths use.
  std::vector<double> arrivals(n, 0.0);
  for (const PathRow& row : table.rows) {
    bool prefix_ok = true;
    for (std::size_t i = 0; i < row.edges.size(); ++i) {
      const VertexId w = g.edge(row.edges[i]).from;
      if (prefix_ok && depths[w].count(i)) arrivals[w] += row.prior;
      prefix_ok = prefix_ok && edge_allowed(g.edge(row.edges[i]), evidence);
    }
  }

  for (VertexId w = 0; w < n; ++w) {
    if (depths[w].empty() || w == g.sink()) continue;
    out.t_emphasis[w] = num[w] / arrivals[w];
    out.h_emphasis[w] = num_t[w] / arrivals[w];
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const VertexId w = g.edge(e).from;
    if (edge_num[e] > 0.0) out.edge_posterior[e] = edge_num[e] / num_t[w];
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (!out.consistent[r]) continue;
    double p = 1.0;
    for (EdgeId e : table.rows[r].edges) p *= out.edge_posterior[e];
    out.path_posterior[r] = p;
  }
  return out;
}

std::vector<double> joint_posterior_by_enumeration(const PathTable& table, const Evidence& evidence) {
  std::vector<double> w(table.rows.size(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const PathRow& row = table.rows[r];
    if (!path_consistent(table, row, evidence)) continue;
    double x = row.prior;
    for (std::size_t i = 0; i < row.edges.size(); ++i) x *= step_factor(table.graph, row, i, evidence);
    w[r] = x;
    total += x;
  }
  if (!(total > 0.0)) throw ZeroSupportError("no path consistent with the evidence has positive weight");
  for (auto& x : w) x /= total;
  return w;
}

namespace {

template <class Probs>
std::size_t draw(std::mt19937_64& rng, const Probs& probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  std::uniform_real_distribution<double> unif(0.0, total);
  const double u = unif(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

std::vector<Trajectory> simulate(const CegGraph& graph, std::size_t n, std::uint64_t seed,
                                 std::size_t max_steps) {
  std::mt19937_64 rng(seed);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Trajectory tr;
    VertexId v = graph.root();
    while (v != graph.sink() && !graph.out_edges(v).empty() && tr.edges.size() < max_steps) {
      const auto outs = graph.out_edges(v);
      std::vector<double> probs;
      for (EdgeId e : outs) probs.push_back(graph.edge(e).prob.value());
      const EdgeId e = outs[draw(rng, probs)];
      const Edge& edge = graph.edge(e);
      const bool timed = graph.vertex(v).timed && edge.holding;
      tr.edges.push_back(e);
      tr.holds.push_back(timed ? sample(*edge.holding, rng) : 0.0);
      v = edge.to;
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<SmpTrajectory> simulate(const SmpModel& smp, const std::string& from, std::size_t n,
                                    std::uint64_t seed, std::size_t max_steps) {
  std::mt19937_64 rng(seed);
  const std::size_t s0 = smp.state_index(from);
  std::vector<SmpTrajectory> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    SmpTrajectory tr;
    std::size_t s = s0;
    tr.states.push_back(s);
    while (!smp.absorbing[s] && tr.holds.size() < max_steps) {
      const std::size_t j = draw(rng, smp.transition[s]);
      tr.holds.push_back(smp.holding[s][j].empty() ? 0.0 : smp.holding[s][j].sample(rng));
      s = j;
      tr.states.push_back(s);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

namespace {

HoldingTimeSpec random_spec(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> fam(0, 2);
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto round3 = [](double x) { return std::round(x * 1000.0) / 1000.0; };
  switch (fam(rng)) {
    case 0: return HoldingTimeSpec::exponential(round3(u(0.5, 3.0)));
    case 1: return HoldingTimeSpec::normal(round3(u(1.0, 5.0)), round3(u(0.5, 2.0)));
    default: return HoldingTimeSpec::weibull(round3(u(0.8, 3.0)), round3(u(1.0, 5.0)));
  }
}

CegGraph random_graph(std::mt19937_64& rng, const RandomModelConfig& cfg) {
  auto u01 = [&] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };
  auto uint = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
  CegGraph g;
  std::vector<std::vector<VertexId>> levels(static_cast<std::size_t>(cfg.max_depth) + 1);
  int counter = 0;
  auto new_vertex = [&](int level) {
    Vertex v;
    v.id = "r" + std::to_string(counter++);
    v.timed = u01() >= cfg.untimed_fraction;
    const VertexId id = g.add_vertex(std::move(v));
    levels[static_cast<std::size_t>(level)].push_back(id);
    return id;
  };
  const VertexId root = new_vertex(0);
  Vertex sinkv;
  sinkv.id = "sink";
  const VertexId sink = g.add_vertex(std::move(sinkv));
  g.set_root(root);
  g.set_sink(sink);

  static const char* labels[] = {"a", "b", "c"};
  for (int level = 0; level < cfg.max_depth; ++level) {
    for (std::size_t idx = 0; idx < levels[static_cast<std::size_t>(level)].size(); ++idx) {
      const VertexId v = levels[static_cast<std::size_t>(level)][idx];
      const int b = uint(level == 0 ? 2 : 1, cfg.max_branching);
      std::vector<int> weights;
      for (int j = 0; j < b; ++j) weights.push_back(uint(1, 9));
      const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      for (int j = 0; j < b; ++j) {
        VertexId to = sink;
        const double r = u01();
        if (level + 1 < cfg.max_depth && r >= 0.2) {
          std::vector<VertexId> deeper;
          for (int l2 = level + 1; l2 < cfg.max_depth; ++l2) {
            for (VertexId x : levels[static_cast<std::size_t>(l2)]) deeper.push_back(x);
          }
          if (r < 0.45 && !deeper.empty()) {
            to = deeper[static_cast<std::size_t>(uint(0, static_cast<int>(deeper.size()) - 1))];
          } else {
            to = new_vertex(level + 1);
          }
        }
        Edge e;
        e.from = v;
        e.to = to;
        e.label = labels[j];
        e.prob = Decimal::from_double(weights[static_cast<std::size_t>(j)] / total);
        if (g.vertex(v).timed) e.holding = random_spec(rng);
        g.add_edge(std::move(e));
      }
    }
  }
  // Colour a few same-degree pairs as stages: they share probabilities.
  int stage = 0;
  for (VertexId a = 0; a < g.vertex_count(); ++a) {
    for (VertexId b = a + 1; b < g.vertex_count(); ++b) {
      if (a == sink || b == sink || g.vertex(a).stage || g.vertex(b).stage) continue;
      const auto oa = g.out_edges(a);
      const auto ob = g.out_edges(b);
      if (oa.empty() || oa.size() != ob.size() || u01() > 0.15) continue;
      const std::string id = "s" + std::to_string(stage++);
      g.mutable_vertex(a).stage = id;
      g.mutable_vertex(b).stage = id;
      for (std::size_t j = 0; j < oa.size(); ++j) {
        g.mutable_edge(ob[j]).prob = g.edge(oa[j]).prob;
      }
    }
  }
  return g;
}

}  // namespace

RandomCase random_case(std::mt19937_64& rng, const RandomModelConfig& cfg) {
  auto u01 = [&] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };
  for (int attempt = 0; attempt < 10'000; ++attempt) {
    RandomCase c;
    c.graph = random_graph(rng, cfg);
    PathTable table;
    try {
      table = enumerate_paths(c.graph, cfg.max_paths);
    } catch (const CapacityError&) {
      continue;
    }
    Evidence& ev = c.evidence;
    if (u01() < 0.5) {
      std::vector<std::string> kept, dropped;
      for (const auto& e : c.graph.edges()) (u01() < 0.8 ? kept : dropped).push_back(e.id);
      if (u01() < 0.5) {
        ev.retained_edges = kept;
      } else {
        ev.excluded_edges = dropped;
      }
    }
    if (u01() < cfg.timed_evidence_rate) {
      std::vector<const PathRow*> candidates;
      for (const auto& row : table.rows) {
        if (path_consistent(table, row, ev)) candidates.push_back(&row);
      }
      if (candidates.empty()) continue;
      const PathRow& row = *candidates[std::uniform_int_distribution<std::size_t>(
          0, candidates.size() - 1)(rng)];
      std::vector<std::optional<double>> holds;
      for (EdgeId e : row.edges) {
        const Edge& edge = c.graph.edge(e);
        if (u01() < 0.2) {
          holds.emplace_back();
        } else if (edge.holding) {
          holds.emplace_back(std::max(1e-3, sample(*edge.holding, rng)));
        } else {
          holds.emplace_back(std::uniform_real_distribution<double>(0.1, 3.0)(rng));
        }
      }
      ev.holding_times = holds;
      ev.path_length_known = u01() < 0.9;
    }
    try {
      const CegGraph t = build_transporter(c.graph, ev);
      (void)propagate(c.graph, t, ev);
      (void)posterior_by_enumeration(table, ev);
    } catch (const ContradictionError&) {
      continue;
    } catch (const NonIntrinsicEvidenceError&) {
      continue;
    } catch (const ZeroSupportError&) {
      continue;
    }
    return c;
  }
  throw CapacityError("could not generate a random case");
}

}  // namespace ceg
