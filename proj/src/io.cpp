#include "ceg/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ceg/error.hpp"

namespace ceg {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const Digraph& ModelDocument::digraph() const {
  if (kind == Kind::event_tree) return tree;
  return graph;
}

ModelDocument ModelDocument::from_tree(EventTree t, StagePartition s) {
  ModelDocument d;
  d.kind = Kind::event_tree;
  d.tree = std::move(t);
  d.stages = std::move(s);
  return d;
}

ModelDocument ModelDocument::from_graph(CegGraph g) {
  ModelDocument d;
  d.kind = Kind::ceg;
  for (const auto& v : g.vertices()) {
    if (v.stage) d.stages.stages[*v.stage].push_back(v.id);
  }
  d.graph = std::move(g);
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("", "cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace {

std::string child(const std::string& path, std::string_view key) {
  return path + "/" + std::string(key);
}
std::string child(const std::string& path, std::size_t index) {
  return path + "/" + std::to_string(index);
}

const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(child(path, key), "missing required field");
  return *it;
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> as_string_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], child(path, i)));
  return out;
}

Decimal as_decimal(const json& j, const std::string& path) {
  try {
    if (j.is_string()) return Decimal::parse(j.get<std::string>());
    if (j.is_number()) return Decimal::parse(j.dump());
  } catch (const std::invalid_argument& e) {
    throw ParseError(path, e.what());
  }
  throw ParseError(path, "expected a decimal string or number");
}

double as_number(const json& j, const std::string& path) {
  return as_decimal(j, path).value();
}

HoldingTimeSpec parse_holding(const json& j, const std::string& path) {
  const std::string fam_path = child(path, "family");
  const std::string name = as_string(require(j, path, "family"), fam_path);
  const auto family = parse_family(name);
  if (!family) throw ParseError(fam_path, "unknown distribution family '" + name + "'");
  HoldingTimeSpec spec;
  spec.family = *family;
  const json& params = require(j, path, "params");
  const std::string params_path = child(path, "params");
  if (!params.is_array()) throw ParseError(params_path, "expected an array");
  for (std::size_t i = 0; i < params.size(); ++i) {
    spec.params.push_back(as_decimal(params[i], child(params_path, i)));
  }
  auto conv = j.find("convention");
  spec.convention = (conv == j.end() || conv->is_null())
                        ? default_convention(*family)
                        : as_string(*conv, child(path, "convention"));
  if (auto msg = check_spec(spec); !msg.empty()) throw ParseError(path, msg);
  return spec;
}

const json* optional_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return nullptr;
  return &*it;
}

template <class G>
void fill_graph(G& g, const json& doc, std::map<std::string, std::string>& cluster_of_edge) {
  const std::string vpath = "/vertices";
  const json& vs = require(doc, "", "vertices");
  if (!vs.is_array()) throw ParseError(vpath, "expected an array");
  if (vs.empty()) throw ParseError(vpath, "no root: the vertex list is empty");

  std::set<std::string> untimed;
  if (const json* u = optional_field(doc, "untimed_vertices")) {
    for (auto& id : as_string_list(*u, "/untimed_vertices")) untimed.insert(id);
  }
  std::map<std::string, int> slices;
  if (const json* s = optional_field(doc, "slices")) {
    if (!s->is_object()) throw ParseError("/slices", "expected an object");
    for (auto it = s->begin(); it != s->end(); ++it) {
      if (!it.value().is_number_integer()) throw ParseError("/slices/" + it.key(), "expected an integer");
      slices[it.key()] = it.value().template get<int>();
    }
  }
  std::map<std::string, std::vector<std::string>> members;
  if (const json* p = optional_field(doc, "positions")) {
    if (!p->is_object()) throw ParseError("/positions", "expected an object");
    for (auto it = p->begin(); it != p->end(); ++it) {
      members[it.key()] = as_string_list(it.value(), "/positions/" + it.key());
    }
  }

  for (std::size_t i = 0; i < vs.size(); ++i) {
    Vertex v;
    v.id = as_string(vs[i], child(vpath, i));
    if (g.find_vertex(v.id)) throw ParseError(child(vpath, i), "duplicate vertex '" + v.id + "'");
    v.timed = !untimed.count(v.id);
    if (auto it = slices.find(v.id); it != slices.end()) v.slice = it->second;
    if (auto it = members.find(v.id); it != members.end()) v.members = it->second;
    g.add_vertex(std::move(v));
  }
  for (const auto& id : untimed) {
    if (!g.find_vertex(id)) throw ParseError("/untimed_vertices", "unknown vertex '" + id + "'");
  }

  const std::string epath = "/edges";
  const json& es = require(doc, "", "edges");
  if (!es.is_array()) throw ParseError(epath, "expected an array");
  std::set<std::string> cyclic;
  if (const json* c = optional_field(doc, "cyclic_edges")) {
    for (auto& id : as_string_list(*c, "/cyclic_edges")) cyclic.insert(id);
  }
  for (std::size_t i = 0; i < es.size(); ++i) {
    const std::string p = child(epath, i);
    const json& ej = es[i];
    Edge e;
    const std::string from = as_string(require(ej, p, "from"), child(p, "from"));
    const std::string to = as_string(require(ej, p, "to"), child(p, "to"));
    auto fv = g.find_vertex(from);
    if (!fv) throw ParseError(child(p, "from"), "unknown vertex '" + from + "'");
    auto tv = g.find_vertex(to);
    if (!tv) throw ParseError(child(p, "to"), "unknown vertex '" + to + "'");
    e.from = *fv;
    e.to = *tv;
    e.label = as_string(require(ej, p, "label"), child(p, "label"));
    e.prob = as_decimal(require(ej, p, "prob"), child(p, "prob"));
    if (auto it = ej.find("id"); it != ej.end() && !it->is_null()) e.id = as_string(*it, child(p, "id"));
    if (auto it = ej.find("holding"); it != ej.end() && !it->is_null()) {
      e.holding = parse_holding(*it, child(p, "holding"));
    }
    if (auto it = ej.find("cluster"); it != ej.end() && !it->is_null()) {
      e.cluster = as_string(*it, child(p, "cluster"));
    }
    if (e.id.empty()) e.id = default_edge_id(from, e.label);
    if (g.find_edge(e.id)) throw ParseError(p, "duplicate edge id '" + e.id + "'");
    if (auto it = cluster_of_edge.find(e.id); it != cluster_of_edge.end()) {
      if (e.cluster && *e.cluster != it->second) {
        throw ParseError(child(p, "cluster"), "edge is listed in cluster '" + it->second + "'");
      }
      e.cluster = it->second;
    }
    e.cyclic = cyclic.count(e.id) > 0;
    g.add_edge(std::move(e));
  }
  for (const auto& id : cyclic) {
    if (!g.find_edge(id)) throw ParseError("/cyclic_edges", "unknown edge '" + id + "'");
  }
  for (const auto& [id, c] : cluster_of_edge) {
    if (!g.find_edge(id)) throw ParseError("/clusters/" + c, "unknown edge '" + id + "'");
  }

  VertexId root = 0;
  if (const json* r = optional_field(doc, "root")) {
    const std::string id = as_string(*r, "/root");
    auto v = g.find_vertex(id);
    if (!v) throw ParseError("/root", "unknown vertex '" + id + "'");
    root = *v;
  }
  g.set_root(root);
}

}  // namespace

ModelDocument parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("", "expected a JSON object");

  ModelDocument out;
  std::string kind = "ceg";
  if (const json* k = optional_field(doc, "kind")) kind = as_string(*k, "/kind");
  if (kind == "event_tree") {
    out.kind = ModelDocument::Kind::event_tree;
  } else if (kind == "ceg") {
    out.kind = ModelDocument::Kind::ceg;
  } else {
    throw ParseError("/kind", "expected \"ceg\" or \"event_tree\", got '" + kind + "'");
  }

  std::map<std::string, std::string> cluster_of_edge;
  if (const json* c = optional_field(doc, "clusters")) {
    if (!c->is_object()) throw ParseError("/clusters", "expected an object");
    for (auto it = c->begin(); it != c->end(); ++it) {
      for (auto& id : as_string_list(it.value(), "/clusters/" + it.key())) {
        auto [pos, inserted] = cluster_of_edge.emplace(id, it.key());
        if (!inserted) throw ParseError("/clusters/" + it.key(), "edge '" + id + "' is in two clusters");
      }
    }
  }

  if (const json* s = optional_field(doc, "stages")) {
    if (!s->is_object()) throw ParseError("/stages", "expected an object");
    for (auto it = s->begin(); it != s->end(); ++it) {
      out.stages.stages[it.key()] = as_string_list(it.value(), "/stages/" + it.key());
    }
  }
  if (const json* r = optional_field(doc, "revised")) {
    if (!r->is_boolean()) throw ParseError("/revised", "expected a boolean");
    out.revised = r->get<bool>();
  }

  if (out.kind == ModelDocument::Kind::event_tree) {
    fill_graph(out.tree, doc, cluster_of_edge);
    return out;
  }

  fill_graph(out.graph, doc, cluster_of_edge);
  CegGraph& g = out.graph;
  std::optional<VertexId> sink;
  if (const json* s = optional_field(doc, "sink")) {
    const std::string id = as_string(*s, "/sink");
    sink = g.find_vertex(id);
    if (!sink) throw ParseError("/sink", "unknown vertex '" + id + "'");
  } else {
    for (VertexId v = 0; v < g.vertex_count(); ++v) {
      if (!g.out_edges(v).empty()) continue;
      if (sink) throw ParseError("/sink", "several vertices without outgoing edges; name the sink");
      sink = v;
    }
    if (!sink) throw ParseError("/sink", "no vertex without outgoing edges");
  }
  g.set_sink(*sink);
  for (const auto& [stage, ids] : out.stages.stages) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto v = g.find_vertex(ids[i]);
      if (!v) throw ParseError("/stages/" + stage + "/" + std::to_string(i), "unknown vertex '" + ids[i] + "'");
      if (g.vertex(*v).stage) {
        throw ParseError("/stages/" + stage, "vertex '" + ids[i] + "' is in two stages");
      }
      g.mutable_vertex(*v).stage = stage;
    }
  }
  return out;
}

ModelDocument load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

namespace {

ordered_json holding_json(const HoldingTimeSpec& spec) {
  ordered_json h;
  h["family"] = to_string(spec.family);
  ordered_json params = ordered_json::array();
  for (const auto& p : spec.params) params.push_back(p.text());
  h["params"] = params;
  h["convention"] = spec.convention;
  return h;
}

ordered_json graph_json(const Digraph& g, const char* kind, const CegGraph* as_ceg,
                        const StagePartition& stages, const std::vector<double>* prob_override) {
  ordered_json doc;
  doc["kind"] = kind;
  doc["root"] = g.has_root() ? ordered_json(g.vertex(g.root()).id) : ordered_json(nullptr);
  if (as_ceg) doc["sink"] = as_ceg->has_sink() ? ordered_json(g.vertex(as_ceg->sink()).id) : ordered_json(nullptr);
  ordered_json vs = ordered_json::array();
  for (const auto& v : g.vertices()) vs.push_back(v.id);
  doc["vertices"] = vs;

  ordered_json es = ordered_json::array();
  std::map<std::string, std::vector<std::string>> clusters;
  std::vector<std::string> cyclic;
  for (EdgeId i = 0; i < g.edge_count(); ++i) {
    const Edge& e = g.edge(i);
    ordered_json ej;
    ej["id"] = e.id;
    ej["from"] = g.vertex(e.from).id;
    ej["to"] = g.vertex(e.to).id;
    ej["label"] = e.label;
    if (prob_override) {
      ej["prob"] = Decimal::from_double((*prob_override)[i]).text();
      ej["prior_prob"] = e.prob.text();
    } else {
      ej["prob"] = e.prob.text();
    }
    ej["holding"] = e.holding ? holding_json(*e.holding) : ordered_json(nullptr);
    es.push_back(ej);
    if (e.cluster) clusters[*e.cluster].push_back(e.id);
    if (e.cyclic) cyclic.push_back(e.id);
  }
  doc["edges"] = es;

  ordered_json st = ordered_json::object();
  for (const auto& [id, members] : stages.stages) st[id] = members;
  doc["stages"] = st;
  ordered_json cl = ordered_json::object();
  for (const auto& [id, members] : clusters) cl[id] = members;
  doc["clusters"] = cl;
  doc["cyclic_edges"] = cyclic;

  ordered_json untimed = ordered_json::array();
  ordered_json slices = ordered_json::object();
  ordered_json positions = ordered_json::object();
  for (const auto& v : g.vertices()) {
    if (!v.timed) untimed.push_back(v.id);
    if (v.slice != 1) slices[v.id] = v.slice;
    if (!v.members.empty()) positions[v.id] = v.members;
  }
  doc["untimed_vertices"] = untimed;
  doc["slices"] = slices;
  doc["positions"] = positions;
  doc["revised"] = prob_override != nullptr;
  return doc;
}

StagePartition stages_of(const CegGraph& g) {
  StagePartition s;
  for (const auto& v : g.vertices()) {
    if (v.stage) s.stages[*v.stage].push_back(v.id);
  }
  return s;
}

}  // namespace

std::string save_model(const ModelDocument& doc) {
  ordered_json j;
  if (doc.kind == ModelDocument::Kind::event_tree) {
    j = graph_json(doc.tree, "event_tree", nullptr, doc.stages, nullptr);
  } else {
    j = graph_json(doc.graph, "ceg", &doc.graph, stages_of(doc.graph), nullptr);
  }
  j["revised"] = doc.revised;
  return j.dump(2) + "\n";
}

std::string save_revised(const RevisedModel& revised) {
  const CegGraph& g = revised.transporter;
  return graph_json(g, "ceg", &g, stages_of(g), &revised.revised).dump(2) + "\n";
}

Evidence parse_evidence(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("", "expected a JSON object");
  Evidence ev;
  if (const json* r = optional_field(doc, "retained_edges")) {
    ev.retained_edges = as_string_list(*r, "/retained_edges");
  }
  if (const json* x = optional_field(doc, "excluded_edges")) {
    ev.excluded_edges = as_string_list(*x, "/excluded_edges");
  }
  if (const json* vh = optional_field(doc, "vertex_holds")) {
    if (!vh->is_object()) throw ParseError("/vertex_holds", "expected an object");
    for (auto it = vh->begin(); it != vh->end(); ++it) {
      const double h = as_number(it.value(), "/vertex_holds/" + it.key());
      if (!(h >= 0.0)) throw ParseError("/vertex_holds/" + it.key(), "must be nonnegative");
      ev.vertex_holds[it.key()] = h;
    }
  }
  auto read_times = [](const json& arr, const std::string& path) {
    if (!arr.is_array()) throw ParseError(path, "expected an array of numbers or nulls");
    std::vector<std::optional<double>> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (arr[i].is_null()) {
        out.emplace_back();
      } else {
        out.emplace_back(as_number(arr[i], child(path, i)));
      }
    }
    return out;
  };
  const json* times = optional_field(doc, "times");
  const json* holds = optional_field(doc, "holding_times");
  if (times && holds) throw ParseError("/holding_times", "give either times or holding_times");
  if (times) {
    try {
      ev.holding_times = Evidence::holds_from_times(read_times(*times, "/times"));
    } catch (const ValidationError& e) {
      throw ParseError("/times", e.what());
    }
  } else if (holds) {
    ev.holding_times = read_times(*holds, "/holding_times");
    for (std::size_t i = 0; i < ev.holding_times->size(); ++i) {
      const auto& h = (*ev.holding_times)[i];
      if (h && !(*h >= 0.0)) throw ParseError("/holding_times/" + std::to_string(i), "must be nonnegative");
    }
  }
  if (const json* p = optional_field(doc, "path_length_known")) {
    if (!p->is_boolean()) throw ParseError("/path_length_known", "expected a boolean");
    ev.path_length_known = p->get<bool>();
  }
  if (const json* q = optional_field(doc, "arrival_query")) {
    ArrivalQuery aq;
    aq.vertex = as_string(require(*q, "/arrival_query", "vertex"), "/arrival_query/vertex");
    aq.t_star = as_number(require(*q, "/arrival_query", "t_star"), "/arrival_query/t_star");
    if (!(aq.t_star >= 0.0)) throw ParseError("/arrival_query/t_star", "must be nonnegative");
    ev.arrival_query = aq;
  }
  if (const json* f = optional_field(doc, "future_excluded")) {
    ev.future_excluded = as_string_list(*f, "/future_excluded");
  }
  return ev;
}

Evidence load_evidence(const std::filesystem::path& path) { return parse_evidence(read_file(path)); }

std::string save_evidence(const Evidence& ev) {
  ordered_json j;
  j["retained_edges"] = ev.retained_edges ? ordered_json(*ev.retained_edges) : ordered_json(nullptr);
  j["excluded_edges"] = ev.excluded_edges;
  if (ev.holding_times) {
    ordered_json h = ordered_json::array();
    for (const auto& x : *ev.holding_times) h.push_back(x ? ordered_json(*x) : ordered_json(nullptr));
    j["holding_times"] = h;
  } else {
    j["holding_times"] = nullptr;
  }
  j["path_length_known"] = ev.path_length_known;
  ordered_json vh = ordered_json::object();
  for (const auto& [id, h] : ev.vertex_holds) vh[id] = h;
  j["vertex_holds"] = vh;
  if (ev.arrival_query) {
    j["arrival_query"] = {{"vertex", ev.arrival_query->vertex}, {"t_star", ev.arrival_query->t_star}};
  } else {
    j["arrival_query"] = nullptr;
  }
  j["future_excluded"] = ev.future_excluded;
  return j.dump(2) + "\n";
}

}  // namespace ceg
