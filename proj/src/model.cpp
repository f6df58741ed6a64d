#include "ceg/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ceg/error.hpp"

namespace ceg {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::unsupported_family: return "unsupported-family";
    case ErrorKind::incomplete_model: return "incomplete-model";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::non_intrinsic_evidence: return "non-intrinsic-evidence";
    case ErrorKind::contradiction: return "contradiction";
    case ErrorKind::zero_support: return "zero-support";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::structural: return "structural";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Decimal

Decimal Decimal::parse(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("not a finite decimal number: '" + std::string(text) + "'");
  }
  Decimal d;
  d.value_ = v;
  d.text_ = std::string(s);
  return d;
}

Decimal Decimal::from_double(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("non-finite value");
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  Decimal d;
  d.value_ = value;
  d.text_ = std::string(buf, ptr);
  return d;
}

// ---------------------------------------------------------------- families

const char* to_string(Family family) {
  switch (family) {
    case Family::exponential: return "exponential";
    case Family::normal: return "normal";
    case Family::weibull: return "weibull";
    case Family::empirical_grid: return "empirical-grid";
  }
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  if (name == "exponential") return Family::exponential;
  if (name == "normal") return Family::normal;
  if (name == "weibull") return Family::weibull;
  if (name == "empirical-grid" || name == "empirical_grid") return Family::empirical_grid;
  return std::nullopt;
}

std::string default_convention(Family family) {
  switch (family) {
    case Family::exponential: return "rate";
    case Family::normal: return "mean_sd";
    case Family::weibull: return "shape_scale";
    case Family::empirical_grid: return "knots";
  }
  return {};
}

HoldingTimeSpec HoldingTimeSpec::make(Family family, std::vector<double> params,
                                      std::string convention) {
  HoldingTimeSpec s;
  s.family = family;
  for (double p : params) s.params.push_back(Decimal::from_double(p));
  s.convention = convention.empty() ? default_convention(family) : std::move(convention);
  return s;
}

HoldingTimeSpec HoldingTimeSpec::exponential(double rate) {
  return make(Family::exponential, {rate});
}
HoldingTimeSpec HoldingTimeSpec::normal(double mean, double sd) {
  return make(Family::normal, {mean, sd});
}
HoldingTimeSpec HoldingTimeSpec::weibull(double shape, double scale) {
  return make(Family::weibull, {shape, scale});
}
HoldingTimeSpec HoldingTimeSpec::empirical(std::vector<double> knots) {
  return make(Family::empirical_grid, std::move(knots));
}

std::vector<double> HoldingTimeSpec::values() const {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

std::string HoldingTimeSpec::canonical() const {
  std::string s = to_string(family);
  s += '(';
  s += convention;
  for (const auto& p : params) {
    s += ',';
    s += p.text();
  }
  s += ')';
  return s;
}

namespace {

bool allowed_convention(Family f, std::string_view c) {
  switch (f) {
    case Family::exponential: return c == "rate" || c == "mean";
    case Family::normal: return c == "mean_sd" || c == "mean_sd_truncated";
    case Family::weibull: return c == "shape_scale" || c == "scale_shape";
    case Family::empirical_grid: return c == "knots";
  }
  return false;
}

}  // namespace

std::string check_spec(const HoldingTimeSpec& spec) {
  if (!allowed_convention(spec.family, spec.convention)) {
    return "convention '" + spec.convention + "' is not defined for family " +
           to_string(spec.family);
  }
  const auto p = spec.values();
  switch (spec.family) {
    case Family::exponential:
      if (p.size() != 1) return "exponential takes 1 parameter";
      if (!(p[0] > 0)) return "exponential parameter must be positive";
      return {};
    case Family::normal:
      if (p.size() != 2) return "normal takes 2 parameters";
      if (!(p[1] > 0)) return "normal standard deviation must be positive";
      return {};
    case Family::weibull:
      if (p.size() != 2) return "weibull takes 2 parameters";
      if (!(p[0] > 0 && p[1] > 0)) return "weibull parameters must be positive";
      return {};
    case Family::empirical_grid: {
      if (p.size() < 4 || p.size() % 2 != 0) return "empirical-grid needs >= 2 (t, f) knots";
      double area = 0.0;
      for (std::size_t i = 0; i < p.size(); i += 2) {
        if (p[i] < 0) return "empirical-grid knot times must be nonnegative";
        if (p[i + 1] < 0) return "empirical-grid densities must be nonnegative";
        if (i > 0) {
          if (!(p[i] > p[i - 2])) return "empirical-grid knot times must increase";
          area += 0.5 * (p[i + 1] + p[i - 1]) * (p[i] - p[i - 2]);
        }
      }
      if (std::abs(area - 1.0) > 1e-6) {
        std::ostringstream os;
        os << "empirical-grid density integrates to " << area << ", not 1";
        return os.str();
      }
      return {};
    }
  }
  return "unknown family";
}

std::string default_edge_id(std::string_view from_id, std::string_view label) {
  std::string s(from_id);
  s += '/';
  s += label;
  return s;
}

// ---------------------------------------------------------------- Digraph

VertexId Digraph::add_vertex(Vertex v) {
  if (vertex_by_id_.count(v.id)) throw ValidationError("duplicate vertex id '" + v.id + "'");
  const VertexId idx = vertices_.size();
  vertex_by_id_.emplace(v.id, idx);
  vertices_.push_back(std::move(v));
  out_.emplace_back();
  in_.emplace_back();
  return idx;
}

EdgeId Digraph::add_edge(Edge e) {
  if (e.from >= vertices_.size() || e.to >= vertices_.size()) {
    throw ValidationError("edge '" + e.id + "' references a missing vertex");
  }
  if (e.id.empty()) e.id = default_edge_id(vertices_[e.from].id, e.label);
  if (edge_by_id_.count(e.id)) throw ValidationError("duplicate edge id '" + e.id + "'");
  const EdgeId idx = edges_.size();
  edge_by_id_.emplace(e.id, idx);
  out_[e.from].push_back(idx);
  in_[e.to].push_back(idx);
  edges_.push_back(std::move(e));
  return idx;
}

std::optional<VertexId> Digraph::find_vertex(std::string_view id) const {
  auto it = vertex_by_id_.find(std::string(id));
  if (it == vertex_by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<EdgeId> Digraph::find_edge(std::string_view id) const {
  auto it = edge_by_id_.find(std::string(id));
  if (it == edge_by_id_.end()) return std::nullopt;
  return it->second;
}

VertexId Digraph::vertex_index(std::string_view id) const {
  if (auto v = find_vertex(id)) return *v;
  throw ValidationError("unknown vertex '" + std::string(id) + "'");
}

EdgeId Digraph::edge_index(std::string_view id) const {
  if (auto e = find_edge(id)) return *e;
  throw ValidationError("unknown edge '" + std::string(id) + "'");
}

VertexId Digraph::root() const {
  if (!root_) throw ValidationError("graph has no root");
  return *root_;
}

void Digraph::set_root(VertexId v) {
  if (v >= vertices_.size()) throw ValidationError("root index out of range");
  root_ = v;
}

bool Digraph::has_cyclic_edges() const {
  return std::any_of(edges_.begin(), edges_.end(), [](const Edge& e) { return e.cyclic; });
}

std::vector<VertexId> topological_order(const Digraph& g) {
  std::vector<std::size_t> indeg(g.vertex_count(), 0);
  for (const auto& e : g.edges())
    if (!e.cyclic) ++indeg[e.to];
  std::deque<VertexId> ready;
  for (VertexId v = 0; v < g.vertex_count(); ++v)
    if (indeg[v] == 0) ready.push_back(v);
  std::vector<VertexId> order;
  order.reserve(g.vertex_count());
  while (!ready.empty()) {
    const VertexId v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (EdgeId e : g.out_edges(v)) {
      const auto& ed = g.edge(e);
      if (ed.cyclic) continue;
      if (--indeg[ed.to] == 0) ready.push_back(ed.to);
    }
  }
  if (order.size() != g.vertex_count()) {
    throw StructuralError("graph contains a directed cycle outside its cyclic edges");
  }
  return order;
}

std::vector<VertexId> EventTree::situations() const {
  std::vector<VertexId> out;
  for (VertexId v = 0; v < vertex_count(); ++v)
    if (!is_leaf(v)) out.push_back(v);
  return out;
}

VertexId CegGraph::sink() const {
  if (!sink_) throw ValidationError("graph has no sink");
  return *sink_;
}

void CegGraph::set_sink(VertexId v) {
  if (v >= vertex_count()) throw ValidationError("sink index out of range");
  sink_ = v;
}

std::optional<std::string> StagePartition::stage_of(std::string_view vertex_id) const {
  for (const auto& [stage, members] : stages)
    if (std::find(members.begin(), members.end(), vertex_id) != members.end()) return stage;
  return std::nullopt;
}

// ---------------------------------------------------------------- validation

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << v.message;
    if (!v.subjects.empty()) {
      os << " [";
      for (std::size_t i = 0; i < v.subjects.size(); ++i) os << (i ? ", " : "") << v.subjects[i];
      os << "]";
    }
    os << '\n';
  }
  return os.str();
}

namespace {

void add(ValidationReport& r, Violation::Kind kind, std::vector<std::string> subjects,
         std::string message, double deficit = 0.0) {
  r.violations.push_back({kind, std::move(subjects), std::move(message), deficit});
}

void check_sums(const Digraph& g, ValidationReport& r) {
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    const auto out = g.out_edges(v);
    if (out.empty()) continue;
    double sum = 0.0;
    std::set<std::string> labels;
    for (EdgeId e : out) {
      const auto& ed = g.edge(e);
      sum += ed.prob.value();
      if (ed.prob.value() < 0 || ed.prob.value() > 1) {
        add(r, Violation::Kind::probability_sum, {ed.id}, "edge probability outside [0,1]");
      }
      if (!labels.insert(ed.label).second) {
        add(r, Violation::Kind::structure, {g.vertex(v).id},
            "duplicate outgoing edge label '" + ed.label + "'");
      }
    }
    if (std::abs(1.0 - sum) > kProbabilitySumTolerance) {
      std::ostringstream os;
      os << "outgoing probabilities of " << g.vertex(v).id << " sum to " << sum
         << " (deficit " << 1.0 - sum << ")";
      add(r, Violation::Kind::probability_sum, {g.vertex(v).id}, os.str(), 1.0 - sum);
    }
  }
}

void check_holding(const Digraph& g, ValidationReport& r) {
  std::map<std::string, std::pair<std::string, HoldingTimeSpec>> cluster_spec;
  std::map<std::string, std::string> cluster_none;
  for (const auto& e : g.edges()) {
    if (e.holding) {
      if (auto msg = check_spec(*e.holding); !msg.empty()) {
        add(r, Violation::Kind::holding_spec, {e.id}, msg);
      }
    }
    if (!e.cluster) continue;
    if (!e.holding) {
      cluster_none.emplace(*e.cluster, e.id);
    } else {
      auto [it, fresh] = cluster_spec.emplace(*e.cluster, std::make_pair(e.id, *e.holding));
      if (!fresh && !(it->second.second == *e.holding)) {
        add(r, Violation::Kind::cluster, {it->second.first, e.id},
            "edges in cluster '" + *e.cluster + "' have different holding-time specs");
      }
    }
  }
  for (const auto& [cluster, edge] : cluster_none) {
    if (auto it = cluster_spec.find(cluster); it != cluster_spec.end()) {
      add(r, Violation::Kind::cluster, {it->second.first, edge},
          "edges in cluster '" + cluster + "' have different holding-time specs");
    }
  }
}

std::vector<EdgeId> sorted_by_label(const Digraph& g, VertexId v) {
  auto out = g.out_edges(v);
  std::vector<EdgeId> edges(out.begin(), out.end());
  std::sort(edges.begin(), edges.end(),
            [&](EdgeId a, EdgeId b) { return g.edge(a).label < g.edge(b).label; });
  return edges;
}

void check_stage_pair(const Digraph& g, VertexId a, VertexId b, const std::string& stage,
                      ValidationReport& r) {
  const auto& ida = g.vertex(a).id;
  const auto& idb = g.vertex(b).id;
  const auto ea = sorted_by_label(g, a);
  const auto eb = sorted_by_label(g, b);
  if (ea.size() != eb.size()) {
    add(r, Violation::Kind::staging, {ida, idb},
        "situations in stage '" + stage + "' have different out-degrees (" +
            std::to_string(ea.size()) + " vs " + std::to_string(eb.size()) + ")");
    return;
  }
  for (std::size_t i = 0; i < ea.size(); ++i) {
    const auto& x = g.edge(ea[i]);
    const auto& y = g.edge(eb[i]);
    if (x.label != y.label) {
      add(r, Violation::Kind::staging, {ida, idb},
          "situations in stage '" + stage + "' have different edge labels");
      return;
    }
    if (!(x.prob == y.prob)) {
      add(r, Violation::Kind::staging, {ida, idb},
          "situations in stage '" + stage + "' disagree on the probability of '" + x.label +
              "' (" + x.prob.text() + " vs " + y.prob.text() + ")");
      return;
    }
  }
}

/// Cyclic edges of a compiled graph return to the root and are skipped; in a
/// tree they end in ordinary leaves and are followed.
std::vector<bool> reachable_from_root(const Digraph& g, bool follow_cyclic) {
  std::vector<bool> seen(g.vertex_count(), false);
  if (!g.has_root()) return seen;
  std::deque<VertexId> q{g.root()};
  seen[g.root()] = true;
  while (!q.empty()) {
    const VertexId v = q.front();
    q.pop_front();
    for (EdgeId e : g.out_edges(v)) {
      const auto& ed = g.edge(e);
      if (ed.cyclic && !follow_cyclic) continue;
      if (!seen[ed.to]) {
        seen[ed.to] = true;
        q.push_back(ed.to);
      }
    }
  }
  return seen;
}

}  // namespace

ValidationReport validate(const EventTree& tree, const StagePartition& stages) {
  ValidationReport r;
  if (!tree.has_root()) {
    add(r, Violation::Kind::structure, {}, "tree has no root");
    return r;
  }
  const VertexId root = tree.root();
  for (VertexId v = 0; v < tree.vertex_count(); ++v) {
    const auto n_in = tree.in_edges(v).size();
    if (v == root && n_in != 0) {
      add(r, Violation::Kind::structure, {tree.vertex(v).id}, "root has a parent");
    } else if (v != root && n_in != 1) {
      add(r, Violation::Kind::structure, {tree.vertex(v).id},
          "vertex has " + std::to_string(n_in) + " parents (expected 1)");
    }
  }
  const auto seen = reachable_from_root(tree, true);
  for (VertexId v = 0; v < tree.vertex_count(); ++v) {
    if (!seen[v]) add(r, Violation::Kind::unreachable, {tree.vertex(v).id}, "vertex not reachable from root");
  }
  for (const auto& e : tree.edges()) {
    if (e.cyclic && !tree.is_leaf(e.to)) {
      add(r, Violation::Kind::structure, {e.id}, "cyclic tree edge must end in a leaf");
    }
  }
  check_sums(tree, r);
  check_holding(tree, r);

  std::map<std::string, std::string> owner;
  for (const auto& [stage, members] : stages.stages) {
    std::vector<VertexId> idx;
    for (const auto& m : members) {
      auto v = tree.find_vertex(m);
      if (!v) {
        add(r, Violation::Kind::staging, {m}, "stage '" + stage + "' names an unknown vertex");
        continue;
      }
      if (tree.is_leaf(*v)) {
        add(r, Violation::Kind::staging, {m}, "stage '" + stage + "' contains a leaf");
        continue;
      }
      auto [it, fresh] = owner.emplace(m, stage);
      if (!fresh) {
        add(r, Violation::Kind::staging, {m},
            "situation is in stages '" + it->second + "' and '" + stage + "'");
      }
      idx.push_back(*v);
    }
    for (std::size_t i = 1; i < idx.size(); ++i) check_stage_pair(tree, idx[0], idx[i], stage, r);
  }
  return r;
}

ValidationReport validate(const CegGraph& graph) {
  ValidationReport r;
  if (!graph.has_root()) add(r, Violation::Kind::structure, {}, "graph has no root");
  if (!graph.has_sink()) add(r, Violation::Kind::structure, {}, "graph has no sink");
  if (!r.ok()) return r;
  const VertexId sink = graph.sink();
  if (!graph.out_edges(sink).empty()) {
    add(r, Violation::Kind::structure, {graph.vertex(sink).id}, "sink has outgoing edges");
  }
  try {
    (void)topological_order(graph);
  } catch (const StructuralError& e) {
    add(r, Violation::Kind::structure, {}, e.what());
    return r;
  }
  // Every position must lie on a root-to-sink path; a cyclic edge ends a
  // passage-slice and so counts as reaching the sink.
  const auto fwd = reachable_from_root(graph, false);
  std::vector<bool> bwd(graph.vertex_count(), false);
  std::deque<VertexId> q{sink};
  bwd[sink] = true;
  for (const auto& e : graph.edges())
    if (e.cyclic && !bwd[e.from]) {
      bwd[e.from] = true;
      q.push_back(e.from);
    }
  while (!q.empty()) {
    const VertexId v = q.front();
    q.pop_front();
    for (EdgeId e : graph.in_edges(v)) {
      const auto& ed = graph.edge(e);
      if (ed.cyclic) continue;
      if (!bwd[ed.from]) {
        bwd[ed.from] = true;
        q.push_back(ed.from);
      }
    }
  }
  for (VertexId v = 0; v < graph.vertex_count(); ++v) {
    if (!fwd[v] || !bwd[v]) {
      add(r, Violation::Kind::unreachable, {graph.vertex(v).id},
          "vertex is not on any root-to-sink path");
    }
  }
  check_sums(graph, r);
  check_holding(graph, r);

  std::map<std::string, std::vector<VertexId>> by_stage;
  for (VertexId v = 0; v < graph.vertex_count(); ++v)
    if (const auto& s = graph.vertex(v).stage) by_stage[*s].push_back(v);
  for (const auto& [stage, idx] : by_stage)
    for (std::size_t i = 1; i < idx.size(); ++i) check_stage_pair(graph, idx[0], idx[i], stage, r);
  return r;
}

}  // namespace ceg
