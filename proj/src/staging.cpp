#include "ceg/staging.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "ceg/error.hpp"

namespace ceg {

std::string probability_key(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", p);
  return buf;
}

namespace {

constexpr const char* kPalette[] = {
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
    "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
};
constexpr std::size_t kPaletteSize = sizeof kPalette / sizeof kPalette[0];

std::vector<VertexId> bfs_order(const Digraph& g) {
  std::vector<VertexId> order;
  std::vector<char> seen(g.vertex_count(), 0);
  std::deque<VertexId> queue{g.root()};
  seen[g.root()] = 1;
  while (!queue.empty()) {
    const VertexId v = queue.front();
    queue.pop_front();
    order.push_back(v);
    for (EdgeId e : g.out_edges(v)) {
      const Edge& edge = g.edge(e);
      if (edge.cyclic) continue;
      if (!seen[edge.to]) {
        seen[edge.to] = 1;
        queue.push_back(edge.to);
      }
    }
  }
  return order;
}

std::string edge_key(const Edge& e, const std::string& child) {
  std::string s = e.label;
  s += '\x1f';
  s += probability_key(e.prob.value());
  s += '\x1f';
  s += e.cluster.value_or("");
  s += '\x1f';
  s += e.holding ? e.holding->canonical() : "-";
  s += '\x1f';
  s += e.cyclic ? "C" : "";
  s += '\x1f';
  s += child;
  return s;
}

/// Interns signatures so parents refer to children by a short class number.
class SignatureTable {
 public:
  std::size_t intern(const std::string& sig) {
    auto [it, inserted] = ids_.emplace(sig, ids_.size());
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::size_t> ids_;
};

std::string vertex_signature(const Digraph& g, VertexId v, const std::string& colour,
                             const std::vector<std::size_t>& child_class,
                             const std::vector<char>& is_terminal) {
  std::vector<std::string> keys;
  for (EdgeId e : g.out_edges(v)) {
    const Edge& edge = g.edge(e);
    std::string child;
    if (edge.cyclic) {
      child = "root";
    } else if (is_terminal[edge.to]) {
      child = "end";
    } else {
      child = std::to_string(child_class[edge.to]);
    }
    keys.push_back(edge_key(edge, child));
  }
  std::sort(keys.begin(), keys.end());
  std::string sig = colour;
  sig += g.vertex(v).timed ? "|T" : "|U";
  for (const auto& k : keys) {
    sig += '\x1e';
    sig += k;
  }
  return sig;
}

}  // namespace

PositionPartition compute_positions(const EventTree& tree, const StagePartition& stages) {
  const std::size_t n = tree.vertex_count();
  PositionPartition result;
  result.block_of.assign(n, PositionPartition::npos);
  if (n == 0 || !tree.has_root()) return result;

  std::vector<char> is_leaf(n);
  for (VertexId v = 0; v < n; ++v) is_leaf[v] = tree.is_leaf(v);

  const auto order = bfs_order(tree);
  SignatureTable table;
  std::vector<std::size_t> cls(n, PositionPartition::npos);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const VertexId v = *it;
    if (is_leaf[v]) continue;
    const Vertex& vx = tree.vertex(v);
    const auto stage = stages.stage_of(vx.id);
    const std::string colour = stage ? "s:" + *stage : "u:" + vx.id;
    cls[v] = table.intern(vertex_signature(tree, v, colour, cls, is_leaf));
  }

  std::map<std::size_t, std::size_t> block_of_class;
  for (VertexId v : order) {
    if (is_leaf[v]) continue;
    auto [it, inserted] = block_of_class.emplace(cls[v], result.blocks.size());
    if (inserted) result.blocks.emplace_back();
    result.blocks[it->second].push_back(v);
    result.block_of[v] = it->second;
  }
  return result;
}

CegGraph compile_ceg(const EventTree& tree, const PositionPartition& positions,
                     const StagePartition& stages) {
  CegGraph g;
  if (positions.blocks.empty()) {
    throw StructuralError("cannot compile a tree without situations");
  }

  std::map<std::string, std::set<std::size_t>> blocks_per_stage;
  for (std::size_t b = 0; b < positions.blocks.size(); ++b) {
    for (VertexId v : positions.blocks[b]) {
      if (auto s = stages.stage_of(tree.vertex(v).id)) blocks_per_stage[*s].insert(b);
    }
  }

  for (std::size_t b = 0; b < positions.blocks.size(); ++b) {
    const Vertex& rep = tree.vertex(positions.blocks[b].front());
    Vertex w;
    w.id = "w" + std::to_string(b);
    w.timed = rep.timed;
    w.slice = rep.slice;
    if (auto s = stages.stage_of(rep.id); s && blocks_per_stage[*s].size() > 1) w.stage = *s;
    for (VertexId m : positions.blocks[b]) w.members.push_back(tree.vertex(m).id);
    g.add_vertex(std::move(w));
  }
  Vertex sink;
  sink.id = "w_inf";
  const VertexId sink_idx = g.add_vertex(std::move(sink));
  g.set_sink(sink_idx);

  const std::size_t root_block = positions.block_of.at(tree.root());
  g.set_root(root_block);

  for (std::size_t b = 0; b < positions.blocks.size(); ++b) {
    const VertexId rep = positions.blocks[b].front();
    for (EdgeId e : tree.out_edges(rep)) {
      const Edge& te = tree.edge(e);
      Edge ce;
      ce.from = b;
      ce.label = te.label;
      ce.prob = te.prob;
      ce.holding = te.holding;
      ce.cluster = te.cluster;
      if (te.cyclic) {
        ce.to = root_block;
        ce.cyclic = true;
      } else if (tree.is_leaf(te.to)) {
        ce.to = sink_idx;
      } else {
        ce.to = positions.block_of.at(te.to);
      }
      g.add_edge(std::move(ce));
    }
  }
  return g;
}

CegGraph minimize(const CegGraph& graph) {
  const std::size_t n = graph.vertex_count();
  std::vector<char> terminal(n, 0);
  if (graph.has_sink()) terminal[graph.sink()] = 1;
  for (VertexId v = 0; v < n; ++v) {
    if (graph.out_edges(v).empty()) terminal[v] = 1;
  }

  const auto order = topological_order(graph);
  SignatureTable table;
  std::vector<std::size_t> cls(n, PositionPartition::npos);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const VertexId v = *it;
    if (terminal[v]) continue;
    const Vertex& vx = graph.vertex(v);
    const std::string colour = vx.stage ? "s:" + *vx.stage : "u:" + vx.id;
    cls[v] = table.intern(vertex_signature(graph, v, colour, cls, terminal));
  }

  // Representative of each class: the earliest vertex in storage order.
  std::map<std::size_t, VertexId> rep_of_class;
  std::vector<VertexId> rep(n);
  for (VertexId v = 0; v < n; ++v) {
    if (terminal[v]) {
      rep[v] = v;
      continue;
    }
    auto [it, inserted] = rep_of_class.emplace(cls[v], v);
    rep[v] = it->second;
  }

  CegGraph out;
  std::vector<VertexId> new_index(n, PositionPartition::npos);
  for (VertexId v = 0; v < n; ++v) {
    if (rep[v] != v) continue;
    Vertex vx = graph.vertex(v);
    for (VertexId u = v + 1; u < n; ++u) {
      if (rep[u] == v) {
        const auto& more = graph.vertex(u).members;
        if (more.empty()) {
          vx.members.push_back(graph.vertex(u).id);
        } else {
          vx.members.insert(vx.members.end(), more.begin(), more.end());
        }
      }
    }
    new_index[v] = out.add_vertex(std::move(vx));
  }
  for (VertexId v = 0; v < n; ++v) {
    if (rep[v] != v) continue;
    for (EdgeId e : graph.out_edges(v)) {
      Edge edge = graph.edge(e);
      edge.from = new_index[v];
      edge.to = new_index[rep[edge.to]];
      out.add_edge(std::move(edge));
    }
  }
  if (graph.has_root()) out.set_root(new_index[rep[graph.root()]]);
  if (graph.has_sink()) out.set_sink(new_index[graph.sink()]);
  return out;
}

namespace {

std::string quoted(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  q += '"';
  return q;
}

std::map<std::string, std::string> colour_map(const std::set<std::string>& names) {
  std::map<std::string, std::string> m;
  std::size_t i = 0;
  for (const auto& n : names) m[n] = kPalette[i++ % kPaletteSize];
  return m;
}

std::string render(const Digraph& g, const std::vector<std::optional<std::string>>& vertex_stage,
                   const std::string& name) {
  std::set<std::string> stage_names, cluster_names;
  for (const auto& s : vertex_stage) {
    if (s) stage_names.insert(*s);
  }
  for (const auto& e : g.edges()) {
    if (e.cluster) cluster_names.insert(*e.cluster);
  }
  const auto stage_colour = colour_map(stage_names);
  const auto cluster_colour = colour_map(cluster_names);

  std::ostringstream os;
  os << "digraph " << name << " {\n  rankdir=LR;\n  node [shape=circle, style=filled, fillcolor=white];\n";
  for (VertexId v = 0; v < g.vertex_count(); ++v) {
    const Vertex& vx = g.vertex(v);
    os << "  " << quoted(vx.id);
    std::vector<std::string> attrs;
    if (vertex_stage[v]) {
      attrs.push_back("fillcolor=" + quoted(stage_colour.at(*vertex_stage[v])));
      attrs.push_back("tooltip=" + quoted(*vertex_stage[v]));
    }
    if (!vx.timed) attrs.push_back("shape=box");
    if (!attrs.empty()) {
      os << " [";
      for (std::size_t i = 0; i < attrs.size(); ++i) os << (i ? ", " : "") << attrs[i];
      os << "]";
    }
    os << ";\n";
  }
  for (const auto& e : g.edges()) {
    os << "  " << quoted(g.vertex(e.from).id) << " -> " << quoted(g.vertex(e.to).id) << " [label="
       << quoted(e.label + " " + e.prob.text());
    if (e.cluster) os << ", color=" << quoted(cluster_colour.at(*e.cluster));
    if (e.cyclic) os << ", style=dashed, constraint=false";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace

std::string to_dot(const EventTree& tree, const StagePartition& stages) {
  std::vector<std::optional<std::string>> vs;
  for (const auto& v : tree.vertices()) vs.push_back(stages.stage_of(v.id));
  return render(tree, vs, "tree");
}

std::string to_dot(const CegGraph& graph) {
  std::vector<std::optional<std::string>> vs;
  for (const auto& v : graph.vertices()) vs.push_back(v.stage);
  return render(graph, vs, "ceg");
}

}  // namespace ceg
