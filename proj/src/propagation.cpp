#include "ceg/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_set>

#include "ceg/error.hpp"
#include "ceg/staging.hpp"

namespace ceg {

std::vector<std::optional<double>> Evidence::holds_from_times(
    const std::vector<std::optional<double>>& times) {
  std::vector<std::optional<double>> holds(times.size());
  std::optional<double> prev = 0.0;
  double last_known = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto& t = times[i];
    if (t) {
      if (!std::isfinite(*t) || !(*t > last_known)) {
        std::ostringstream os;
        os << "transition times must strictly increase from 0; got " << *t << " at position "
           << i;
        throw ValidationError(os.str());
      }
      last_known = *t;
    }
    if (t && prev) holds[i] = *t - *prev;
    prev = t;
  }
  return holds;
}

std::string template_id(const std::string& id) {
  const auto at = id.rfind('@');
  if (at == std::string::npos) return id;
  return id.substr(0, at);
}

bool edge_id_matches(const std::string& evidence_id, const std::string& edge_id) {
  if (evidence_id == edge_id) return true;
  if (evidence_id.find('@') != std::string::npos) return false;
  return template_id(edge_id) == evidence_id;
}

std::string OpCounts::to_string() const {
  std::ostringstream os;
  os << "ops=" << total() << " (t-potentials=" << t_potentials << " h-potentials=" << h_potentials
     << " t-emphases=" << t_emphases << " h-emphases=" << h_emphases << " revised=" << revised
     << ")";
  return os.str();
}

double RevisedModel::revised_probability(const std::string& edge_id) const {
  const auto e = transporter.find_edge(edge_id);
  return e ? revised.at(*e) : 0.0;
}

namespace {

std::vector<char> allowed_edges(const CegGraph& g, const Evidence& ev) {
  std::vector<char> ok(g.edge_count(), 1);
  std::unordered_set<std::string> exact;
  std::unordered_set<std::string> by_template;
  if (ev.retained_edges) {
    for (const auto& id : *ev.retained_edges) {
      if (id.find('@') == std::string::npos) by_template.insert(id);
      exact.insert(id);
    }
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    const Edge& edge = g.edge(e);
    if (!(edge.prob.value() > 0.0)) ok[e] = 0;
    if (ev.retained_edges && !exact.count(edge.id) && !by_template.count(template_id(edge.id))) {
      ok[e] = 0;
    }
    for (const auto& x : ev.excluded_edges) {
      if (edge_id_matches(x, edge.id)) ok[e] = 0;
    }
  }
  return ok;
}

CegGraph subgraph(const CegGraph& g, const std::vector<char>& keep_v, const std::vector<char>& keep_e,
                  VertexId sink) {
  CegGraph out;
  std::vector<VertexId> idx(g.vertex_count(), 0);
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    if (keep_v[v]) idx[v] = out.add_vertex(g.vertex(v));
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    if (!keep_e[e]) continue;
    Edge edge = g.edge(e);
    edge.from = idx[edge.from];
    edge.to = idx[edge.to];
    out.add_edge(std::move(edge));
  }
  out.set_root(idx[g.root()]);
  out.set_sink(idx[sink]);
  return out;
}

}  // namespace

namespace {

CegGraph select_paths(const CegGraph& graph, const Evidence& evidence, VertexId sink) {
  if (graph.has_cyclic_edges()) {
    throw StructuralError("evidence can only be propagated on an acyclic graph; unroll it first");
  }
  if (!graph.has_root()) throw StructuralError("graph needs a root");
  const std::size_t n = graph.vertex_count();
  auto allowed = allowed_edges(graph, evidence);
  for (EdgeId e : graph.out_edges(sink)) allowed[e] = 0;
  const auto order = topological_order(graph);
  const VertexId root = graph.root();

  std::vector<char> keep_v(n, 0), keep_e(graph.edge_count(), 0);

  if (!evidence.has_times()) {
    std::vector<char> fwd(n, 0), bwd(n, 0);
    fwd[root] = 1;
    for (VertexId v : order) {
      if (!fwd[v]) continue;
      for (EdgeId e : graph.out_edges(v)) {
        if (allowed[e]) fwd[graph.edge(e).to] = 1;
      }
    }
    bwd[sink] = 1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      for (EdgeId e : graph.out_edges(*it)) {
        if (allowed[e] && bwd[graph.edge(e).to]) bwd[*it] = 1;
      }
    }
    for (EdgeId e = 0; e < graph.edge_count(); ++e) {
      const Edge& edge = graph.edge(e);
      if (allowed[e] && fwd[edge.from] && bwd[edge.to]) keep_e[e] = 1;
    }
    for (VertexId v = 0; v < n; ++v) keep_v[v] = fwd[v] && bwd[v];
  } else {
    // States (vertex, depth); with an unknown length, depth saturates at D.
    const std::size_t D = evidence.holding_times->size();
    const bool exact = evidence.path_length_known;
    auto next_depth = [&](std::size_t k) -> std::optional<std::size_t> {
      if (k < D) return k + 1;
      if (!exact) return D;
      return std::nullopt;
    };
    std::vector<std::vector<char>> fwd(n, std::vector<char>(D + 1, 0));
    std::vector<std::vector<char>> bwd(n, std::vector<char>(D + 1, 0));
    fwd[root][0] = 1;
    for (VertexId v : order) {
      for (std::size_t k = 0; k <= D; ++k) {
        if (!fwd[v][k]) continue;
        const auto k2 = next_depth(k);
        if (!k2) continue;
        for (EdgeId e : graph.out_edges(v)) {
          if (allowed[e]) fwd[graph.edge(e).to][*k2] = 1;
        }
      }
    }
    bwd[sink][D] = 1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const VertexId v = *it;
      for (std::size_t k = 0; k <= D; ++k) {
        const auto k2 = next_depth(k);
        if (!k2) continue;
        for (EdgeId e : graph.out_edges(v)) {
          if (allowed[e] && bwd[graph.edge(e).to][*k2]) bwd[v][k] = 1;
        }
      }
    }
    for (EdgeId e = 0; e < graph.edge_count(); ++e) {
      const Edge& edge = graph.edge(e);
      if (!allowed[e]) continue;
      for (std::size_t k = 0; k <= D; ++k) {
        const auto k2 = next_depth(k);
        if (k2 && fwd[edge.from][k] && bwd[edge.from][k] && bwd[edge.to][*k2]) keep_e[e] = 1;
      }
    }
    for (VertexId v = 0; v < n; ++v) {
      std::size_t depths = 0;
      for (std::size_t k = 0; k <= D; ++k) depths += fwd[v][k] && bwd[v][k];
      keep_v[v] = depths > 0;
      if (depths > 1 && v != sink) {
        throw NonIntrinsicEvidenceError(
            "vertex '" + graph.vertex(v).id +
            "' is reached at several depths consistent with the transition times, so the "
            "evidence does not correspond to a subgraph");
      }
    }
  }

  if (!keep_v[root] || !keep_v[sink]) {
    throw ContradictionError("no root-to-sink path is consistent with the evidence");
  }
  return subgraph(graph, keep_v, keep_e, sink);
}

}  // namespace

CegGraph build_transporter(const CegGraph& graph, const Evidence& evidence, bool minimize_result) {
  if (!graph.has_sink()) throw StructuralError("graph needs a sink");
  CegGraph t = select_paths(graph, evidence, graph.sink());
  return minimize_result ? minimize(t) : t;
}

CegGraph build_transporter_to(const CegGraph& graph, const Evidence& evidence,
                              const std::string& target) {
  const auto v = graph.find_vertex(target);
  if (!v) throw ValidationError("unknown vertex '" + target + "'");
  return select_paths(graph, evidence, *v);
}

namespace {

/// Shortest depth of each vertex. Transition times are matched by depth, so
/// a vertex reachable at several depths is an error where times are known.
std::vector<std::size_t> depths_of(const CegGraph& t, const Evidence& evidence) {
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  const std::size_t n = t.vertex_count();
  std::vector<std::size_t> lo(n, unset), hi(n, 0);
  lo[t.root()] = 0;
  for (VertexId v : topological_order(t)) {
    if (lo[v] == unset) continue;
    for (EdgeId e : t.out_edges(v)) {
      const VertexId to = t.edge(e).to;
      lo[to] = std::min(lo[to], lo[v] + 1);
      hi[to] = std::max(hi[to], hi[v] + 1);
    }
  }
  const std::size_t known = evidence.holding_times ? evidence.holding_times->size() : 0;
  for (VertexId v = 0; v < n; ++v) {
    if (lo[v] == unset) {
      lo[v] = 0;
      continue;
    }
    if (v != t.sink() && lo[v] != hi[v] && lo[v] < known) {
      throw NonIntrinsicEvidenceError("vertex '" + t.vertex(v).id +
                                      "' is reached at several depths in the transporter");
    }
  }
  return lo;
}

}  // namespace

namespace {

PropagationResult run(const CegGraph& graph, const CegGraph& transporter, const Evidence& evidence,
                      double sink_emphasis, bool count_sink) {
  const CegGraph& t = transporter;
  const std::size_t n = t.vertex_count();
  PropagationResult result;
  PropagationState& st = result.state;
  st.t_potential.assign(t.edge_count(), 0.0);
  st.h_potential.assign(t.edge_count(), 1.0);
  st.t_emphasis.assign(n, 0.0);
  st.h_emphasis.assign(n, 0.0);
  st.holding.assign(n, std::nullopt);
  st.depth = depths_of(t, evidence);

  const VertexId sink = t.sink();
  for (VertexId v = 0; v < n; ++v) {
    if (v == sink) continue;
    if (t.vertex(v).timed) {
      if (auto it = evidence.vertex_holds.find(t.vertex(v).id); it != evidence.vertex_holds.end()) {
        st.holding[v] = it->second;
      } else if (evidence.holding_times && st.depth[v] < evidence.holding_times->size()) {
        st.holding[v] = (*evidence.holding_times)[st.depth[v]];
      }
    }
    for (EdgeId e : t.out_edges(v)) {
      if (t.edge(e).to == sink) {
        st.pre_sink.push_back(v);
        break;
      }
    }
  }

  const auto order = topological_order(t);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const VertexId w = *it;
    if (w == sink || t.out_edges(w).empty()) {
      if (w != sink) {
        throw StructuralError("transporter vertex '" + t.vertex(w).id + "' has no outgoing edges");
      }
      st.t_emphasis[w] = sink_emphasis;
      st.h_emphasis[w] = sink_emphasis;
      if (count_sink) {
        ++st.ops.t_emphases;
        ++st.ops.h_emphases;
        st.accommodated.push_back(w);
      }
      continue;
    }
    double phi = 0.0;
    double phi_t = 0.0;
    for (EdgeId e : t.out_edges(w)) {
      const Edge& edge = t.edge(e);
      st.t_potential[e] = edge.prob.value() * st.t_emphasis[edge.to];
      ++st.ops.t_potentials;
      double h = 1.0;
      if (st.holding[w]) {
        if (!edge.holding) {
          throw IncompleteModelError("edge '" + edge.id +
                                     "' leaves a timed vertex but has no holding-time spec");
        }
        h = density(*edge.holding, *st.holding[w]);
      }
      st.h_potential[e] = h;
      ++st.ops.h_potentials;
      phi += st.t_potential[e];
      phi_t += st.t_potential[e] * h;
    }
    // Edges the evidence excluded between surviving vertices carry zero messages.
    if (const auto gw = graph.find_vertex(t.vertex(w).id)) {
      for (EdgeId ge : graph.out_edges(*gw)) {
        const Edge& gedge = graph.edge(ge);
        if (t.find_edge(gedge.id)) continue;
        if (!t.find_vertex(graph.vertex(gedge.to).id)) continue;
        st.zeroed_edges.push_back(gedge.id);
        ++st.ops.t_potentials;
        ++st.ops.h_potentials;
      }
    }
    st.t_emphasis[w] = phi;
    st.h_emphasis[w] = phi_t;
    ++st.ops.t_emphases;
    ++st.ops.h_emphases;
    if (!(phi_t > 0.0)) {
      std::ostringstream os;
      os << "evidence has zero support at vertex '" << t.vertex(w).id << "'";
      if (st.holding[w]) os << " with holding time " << *st.holding[w];
      throw ZeroSupportError(os.str());
    }
    st.accommodated.push_back(w);
  }

  result.model.transporter = t;
  result.model.revised.assign(t.edge_count(), 0.0);
  for (VertexId w : order) {
    if (w == sink) continue;
    for (EdgeId e : t.out_edges(w)) {
      result.model.revised[e] = st.t_potential[e] * st.h_potential[e] / st.h_emphasis[w];
      ++st.ops.revised;
    }
  }
  return result;
}

}  // namespace

PropagationResult propagate(const CegGraph& graph, const CegGraph& transporter,
                            const Evidence& evidence) {
  return run(graph, transporter, evidence, 1.0, true);
}

PropagationResult propagate_onto(const CegGraph& graph, const CegGraph& transporter,
                                 const Evidence& evidence, double sink_emphasis) {
  return run(graph, transporter, evidence, sink_emphasis, false);
}

PropagationResult propagate(const CegGraph& graph, const Evidence& evidence) {
  return propagate(graph, build_transporter(graph, evidence), evidence);
}

namespace {

/// Depth-first walk over the paths from `from` that end at `target`, in edge
/// insertion order.
void walk_paths(const CegGraph& g, VertexId from, VertexId target, std::size_t max_paths,
                const std::function<void(const std::vector<EdgeId>&)>& visit) {
  std::vector<EdgeId> stack;
  std::size_t count = 0;
  std::function<void(VertexId)> rec = [&](VertexId v) {
    if (v == target) {
      if (++count > max_paths) {
        throw CapacityError("more than " + std::to_string(max_paths) + " paths");
      }
      visit(stack);
      return;
    }
    for (EdgeId e : g.out_edges(v)) {
      if (g.edge(e).cyclic) continue;
      stack.push_back(e);
      rec(g.edge(e).to);
      stack.pop_back();
    }
  };
  rec(from);
}

}  // namespace

std::vector<PathProbability> path_posteriors(const RevisedModel& revised, std::size_t max_paths) {
  const CegGraph& t = revised.transporter;
  std::vector<PathProbability> out;
  walk_paths(t, t.root(), t.sink(), max_paths, [&](const std::vector<EdgeId>& path) {
    PathProbability p;
    p.probability = 1.0;
    for (EdgeId e : path) {
      p.edges.push_back(t.edge(e).id);
      p.labels.push_back(t.edge(e).label);
      p.probability *= revised.revised[e];
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<PathProbability> arrival_time_path_posterior(const CegGraph& graph,
                                                         const Evidence& evidence,
                                                         const GridConfig& grid,
                                                         std::size_t max_paths) {
  if (!evidence.arrival_query) throw ValidationError("evidence has no arrival query");
  const ArrivalQuery& q = *evidence.arrival_query;
  if (!(q.t_star >= 0.0)) throw ValidationError("arrival time must be nonnegative");

  Evidence structural = evidence;
  structural.holding_times.reset();
  structural.arrival_query.reset();
  std::string target_id = q.vertex;
  if (!graph.find_vertex(target_id)) {
    // A template vertex id names its copy when the unrolling has one slice.
    std::vector<std::string> copies;
    for (const auto& v : graph.vertices()) {
      if (template_id(v.id) == q.vertex && v.id != q.vertex) copies.push_back(v.id);
    }
    if (copies.size() != 1) {
      throw ValidationError(copies.empty() ? "unknown vertex '" + q.vertex + "'"
                                           : "vertex '" + q.vertex + "' is ambiguous across slices");
    }
    target_id = copies.front();
  }
  // Everything downstream of w is common to the routes, so w acts as the sink.
  const CegGraph t = build_transporter_to(graph, structural, target_id);
  const auto prop = propagate_onto(graph, t, structural, 1.0);
  const auto target = std::optional<VertexId>(t.sink());

  std::vector<PathProbability> out;
  double total = 0.0;
  walk_paths(t, t.root(), *target, max_paths, [&](const std::vector<EdgeId>& path) {
    PathProbability p;
    double prior = 1.0;
    std::vector<HoldingTimeSpec> specs;
    for (EdgeId e : path) {
      const Edge& edge = t.edge(e);
      p.edges.push_back(edge.id);
      p.labels.push_back(edge.label);
      prior *= prop.model.revised[e];
      if (!t.vertex(edge.from).timed) continue;
      if (!edge.holding) {
        throw IncompleteModelError("edge '" + edge.id + "' has no holding-time spec");
      }
      specs.push_back(*edge.holding);
    }
    double f = 0.0;
    if (specs.empty()) {
      // No elapsed time is possible on a purely untimed route.
      f = q.t_star == 0.0 ? 1.0 : 0.0;
    } else if (specs.size() == 1) {
      f = density(specs.front(), q.t_star);
    } else {
      f = convolve(specs, grid).at(q.t_star);
    }
    p.probability = prior * f;
    total += p.probability;
    out.push_back(std::move(p));
  });
  if (!(total > 0.0)) {
    throw ZeroSupportError("no route to '" + q.vertex + "' has positive density at t* = " +
                           std::to_string(q.t_star));
  }
  for (auto& p : out) p.probability /= total;
  return out;
}

}  // namespace ceg
