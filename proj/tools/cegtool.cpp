#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ceg/distributions.hpp"
#include "ceg/dynamic.hpp"
#include "ceg/error.hpp"
#include "ceg/io.hpp"
#include "ceg/oracle.hpp"
#include "ceg/propagation.hpp"
#include "ceg/staging.hpp"
#include "json.hpp"

#ifndef CEG_VERSION
#define CEG_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ceg;

namespace {

enum Exit { ok = 0, no_support = 1, invalid = 2, capacity = 3, mismatch = 4 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::zero_support:
    case ErrorKind::contradiction:
      return no_support;
    case ErrorKind::capacity:
      return capacity;
    default:
      return invalid;
  }
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

struct Options {
  std::string model;
  std::string evidence;
  std::string out_dir = ".";
  std::string slices;
  double grid_dt = GridConfig{}.dt;
  double grid_tmax = GridConfig{}.t_max;
  std::uint64_t seed = 1;
  std::size_t samples = kDefaultForecastSamples;
  unsigned workers = 4;
  bool minimize = false;
  std::string query = "absorption";
  std::string from;
  std::string target;
  int steps = 1;
  int cases = 100;
  std::size_t max_paths = kDefaultMaxPaths;
  std::string format = "dot";
};

GridConfig grid_of(const Options& o) { return {o.grid_dt, o.grid_tmax}; }

std::pair<int, int> parse_slices(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const int k = std::stoi(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(text);
    const std::string rest = text.substr(colon + 1);
    const int l = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    if (k < 1 || l < 0) throw std::invalid_argument(text);
    return {k, l};
  } catch (const std::logic_error&) {
    throw ValidationError("--slices expects k:l with k >= 1 and l >= 0, got '" + text + "'");
  }
}

/// Collects outputs, stamps each with the run id and writes the manifest.
class Run {
 public:
  Run(std::string command, const Options& opts) : command_(std::move(command)), opts_(opts) {
    start_ = std::chrono::steady_clock::now();
  }

  void input(const std::string& path) {
    if (path.empty()) return;
    inputs_.push_back({{"path", path}, {"sha256", sha256_hex(read_file(path))}});
  }
  void parameter(const std::string& key, json value) { params_[key] = std::move(value); }
  void ops(const OpCounts& c) {
    ops_ = json{{"t_potentials", c.t_potentials}, {"h_potentials", c.h_potentials},
                {"t_emphases", c.t_emphases},     {"h_emphases", c.h_emphases},
                {"revised", c.revised},           {"total", c.total()}};
  }

  /// Must be called after all inputs and parameters are known.
  const std::string& id() {
    if (id_.empty()) id_ = sha256_hex(identity().dump()).substr(0, 16);
    return id_;
  }

  void write_json(const std::string& name, json doc) {
    json out;
    out["run_id"] = id();
    for (auto& [k, v] : doc.items()) {
      if (k != "run_id") out[k] = v;
    }
    write(name, out.dump(2) + "\n");
  }
  void write_text(const std::string& name, const std::string& comment, const std::string& body) {
    write(name, comment + " run_id=" + id() + "\n" + body);
  }

  void finish() {
    json m = identity();
    m["run_id"] = id();
    m["outputs"] = outputs_;
    if (!ops_.is_null()) m["ops"] = ops_;
    m["wall_time"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_raw("manifest.json", m.dump(2) + "\n");
  }

 private:
  json identity() const {
    json j;
    j["command"] = command_;
    j["version"] = CEG_VERSION;
    j["inputs"] = inputs_;
    j["seed"] = opts_.seed;
    j["grid"] = {{"dt", opts_.grid_dt}, {"t_max", opts_.grid_tmax}};
    j["parameters"] = params_.is_null() ? json::object() : params_;
    return j;
  }
  void write(const std::string& name, const std::string& content) {
    outputs_.push_back(name);
    write_raw(name, content);
  }
  void write_raw(const std::string& name, const std::string& content) {
    fs::create_directories(opts_.out_dir);
    std::ofstream f(fs::path(opts_.out_dir) / name, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + (fs::path(opts_.out_dir) / name).string());
    f << content;
  }

  std::string command_;
  const Options& opts_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::array();
  json params_;
  json ops_;
  json outputs_ = json::array();
  std::string id_;
};

/// Compiled graph for a model file; event trees are staged and compiled first.
CegGraph compiled_graph(const ModelDocument& doc) {
  if (doc.kind == ModelDocument::Kind::ceg) {
    const auto report = validate(doc.graph);
    if (!report.ok()) throw ValidationError(report.to_string());
    return doc.graph;
  }
  const auto report = validate(doc.tree, doc.stages);
  if (!report.ok()) throw ValidationError(report.to_string());
  return compile_ceg(doc.tree, compute_positions(doc.tree, doc.stages), doc.stages);
}

/// Unrolls dynamic graphs over the requested window (one slice by default).
CegGraph window_of(const CegGraph& g, const Options& o, Run& run) {
  if (!g.has_cyclic_edges()) {
    if (!o.slices.empty()) parse_slices(o.slices);
    return g;
  }
  const auto [k, l] = o.slices.empty() ? std::pair{1, 0} : parse_slices(o.slices);
  run.parameter("slices", std::to_string(k) + ":" + std::to_string(l));
  return unroll(g, k, l);
}

std::string paths_csv(const std::vector<PathProbability>& paths) {
  std::ostringstream os;
  os.precision(17);
  os << "path,edges,labels,probability\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::string edges, labels;
    for (std::size_t j = 0; j < paths[i].edges.size(); ++j) {
      edges += (j ? " " : "") + paths[i].edges[j];
      labels += (j ? " " : "") + paths[i].labels[j];
    }
    os << "lambda" << i + 1 << ',' << edges << ',' << labels << ',' << paths[i].probability << '\n';
  }
  return os.str();
}

int cmd_build(const Options& o) {
  Run run("build", o);
  run.input(o.model);
  run.parameter("minimize", o.minimize);
  const auto doc = load_model(o.model);
  CegGraph g = compiled_graph(doc);
  if (o.minimize) g = minimize(g);
  run.write_json("compiled.json", json::parse(save_model(ModelDocument::from_graph(g))));
  run.write_text("compiled.dot", "//", to_dot(g));
  if (doc.kind == ModelDocument::Kind::event_tree) {
    run.write_text("tree.dot", "//", to_dot(doc.tree, doc.stages));
  }
  run.finish();
  std::cout << "vertices=" << g.vertex_count() << " edges=" << g.edge_count() << " run=" << run.id()
            << "\n";
  return ok;
}

int cmd_propagate(const Options& o) {
  Run run("propagate", o);
  run.input(o.model);
  run.input(o.evidence);
  run.parameter("minimize", o.minimize);
  const CegGraph g = window_of(compiled_graph(load_model(o.model)), o, run);
  const Evidence ev = o.evidence.empty() ? Evidence{} : load_evidence(o.evidence);

  if (ev.arrival_query) {
    run.parameter("arrival_query", {{"vertex", ev.arrival_query->vertex}, {"t_star", ev.arrival_query->t_star}});
    const auto post = arrival_time_path_posterior(g, ev, grid_of(o), o.max_paths);
    run.write_text("arrival.csv", "#", paths_csv(post));
    run.finish();
    std::cout << "routes=" << post.size() << " run=" << run.id() << "\n";
    return ok;
  }

  const CegGraph t = build_transporter(g, ev, o.minimize);
  const auto result = propagate(g, t, ev);
  const auto paths = path_posteriors(result.model, o.max_paths);
  run.ops(result.state.ops);
  const std::string summary = result.state.ops.to_string() + " paths=" + std::to_string(paths.size());
  run.write_json("revised.json", json::parse(save_revised(result.model)));
  run.write_text("paths.csv", "#", paths_csv(paths));
  run.write_text("summary.txt", "#", summary + "\n");
  run.finish();
  std::cout << summary << " run=" << run.id() << "\n";
  return ok;
}

int cmd_unroll(const Options& o) {
  Run run("unroll", o);
  run.input(o.model);
  const CegGraph g = window_of(compiled_graph(load_model(o.model)), o, run);
  run.write_json("unrolled.json", json::parse(save_model(ModelDocument::from_graph(g))));
  run.write_text("unrolled.dot", "//", to_dot(g));
  run.finish();
  std::cout << "vertices=" << g.vertex_count() << " edges=" << g.edge_count() << " run=" << run.id()
            << "\n";
  return ok;
}

int cmd_split(const Options& o) {
  Run run("split", o);
  run.input(o.model);
  run.input(o.evidence);
  const auto [k, l] = o.slices.empty() ? std::pair{1, 0} : parse_slices(o.slices);
  run.parameter("slices", std::to_string(k) + ":" + std::to_string(l));
  const CegGraph g = compiled_graph(load_model(o.model));
  const Evidence ev = o.evidence.empty() ? Evidence{} : load_evidence(o.evidence);
  const auto s = split(g, ev, k, l);
  run.ops(s.present.state.ops);
  if (s.has_past()) run.write_json("past.json", json::parse(save_model(ModelDocument::from_graph(s.past))));
  run.write_json("present.json", json::parse(save_revised(s.present.model)));
  run.write_text("present_paths.csv", "#", paths_csv(path_posteriors(s.present.model)));
  run.write_text("future_transition.csv", "#", transition_csv(s.future));
  run.write_json("future_holding.json", json::parse(holding_json(s.future)));
  run.finish();
  std::cout << s.present.state.ops.to_string() << " past_vertices=" << s.past.vertex_count()
            << " future_states=" << s.future.size() << " run=" << run.id() << "\n";
  return ok;
}

int cmd_forecast(const Options& o) {
  Run run("forecast", o);
  run.input(o.model);
  run.input(o.evidence);
  run.parameter("query", o.query);
  const CegGraph g = compiled_graph(load_model(o.model));
  const Evidence ev = o.evidence.empty() ? Evidence{} : load_evidence(o.evidence);
  const SmpModel smp = revise_future(g, ev);
  const std::string from = o.from.empty() ? smp.states.at(smp.adapted.root()) : o.from;
  std::string target = o.target;
  if (target.empty() && g.has_sink()) target = g.vertex(g.sink()).id;
  run.parameter("from", from);
  json report{{"query", o.query}, {"from", from}};
  std::string line;

  if (o.query == "n-step") {
    run.parameter("steps", o.steps);
    const auto d = n_step_distribution(smp, from, o.steps);
    json dist = json::object();
    for (std::size_t i = 0; i < smp.size(); ++i) dist[smp.states[i]] = d[i];
    report["steps"] = o.steps;
    report["distribution"] = dist;
    line = "steps=" + std::to_string(o.steps);
  } else if (o.query == "absorption" || o.query == "mean-time") {
    run.parameter("target", target);
    const auto v = o.query == "absorption" ? absorption_probability(smp, from, target)
                                           : mean_first_passage_time(smp, from, target);
    report["target"] = target;
    report["value"] = v.unreachable && o.query == "mean-time" ? json(nullptr) : json(v.value);
    report["unreachable"] = v.unreachable;
    line = o.query + "=" + (report["value"].is_null() ? std::string("none") : report["value"].dump());
  } else if (o.query == "first-passage") {
    run.parameter("target", target);
    run.parameter("samples", o.samples);
    run.parameter("workers", o.workers);
    const auto s = first_passage_time(smp, from, target, o.samples, o.seed, o.workers);
    report["target"] = target;
    report["samples"] = s.trajectories;
    report["hit_fraction"] = s.hit_fraction();
    report["mean"] = s.mean;
    report["standard_error"] = s.standard_error;
    report["unreachable"] = s.unreachable;
    json q = json::object();
    for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
      if (s.times.empty()) break;
      const auto idx = static_cast<std::size_t>(p * static_cast<double>(s.times.size() - 1));
      char key[8];
      std::snprintf(key, sizeof key, "%.2f", p);
      q[key] = s.times[idx];
    }
    report["quantiles"] = q;
    line = "mean=" + json(s.mean).dump() + " se=" + json(s.standard_error).dump();
  } else {
    throw ValidationError("unknown query '" + o.query + "' (n-step, absorption, mean-time, first-passage)");
  }
  if (report.contains("unreachable") && report["unreachable"].get<bool>()) {
    std::cerr << "warning: '" << target << "' is not reached from '" << from << "' with probability one\n";
  }
  run.write_json("forecast.json", report);
  run.write_text("transition.csv", "#", transition_csv(smp));
  run.write_json("holding.json", json::parse(holding_json(smp)));
  run.finish();
  std::cout << o.query << " " << line << " run=" << run.id() << "\n";
  return ok;
}

std::string path_key(const std::vector<std::string>& ids) {
  std::string key;
  for (const auto& id : ids) key += id + ";";
  return key;
}

int cmd_verify(const Options& o) {
  Run run("verify", o);
  run.parameter("cases", o.cases);
  std::mt19937_64 rng(o.seed);
  double worst_edge = 0, worst_emphasis = 0, worst_path = 0;
  for (int i = 0; i < o.cases; ++i) {
    const auto c = random_case(rng);
    const auto table = enumerate_paths(c.graph);
    const auto oracle = posterior_by_enumeration(table, c.evidence);
    const auto engine = propagate(c.graph, c.evidence);
    const auto& t = engine.model.transporter;
    for (EdgeId e = 0; e < c.graph.edge_count(); ++e) {
      if (std::isnan(oracle.t_emphasis[c.graph.edge(e).from])) continue;
      const auto kept = t.find_edge(c.graph.edge(e).id);
      worst_edge = std::max(worst_edge, std::abs((kept ? engine.model.revised[*kept] : 0.0) -
                                                 oracle.edge_posterior[e]));
    }
    for (VertexId v = 0; v < c.graph.vertex_count(); ++v) {
      if (v == c.graph.sink() || std::isnan(oracle.t_emphasis[v])) continue;
      const auto w = t.find_vertex(c.graph.vertex(v).id);
      if (!w) {
        worst_emphasis = INFINITY;
        continue;
      }
      worst_emphasis = std::max({worst_emphasis, std::abs(engine.state.t_emphasis[*w] - oracle.t_emphasis[v]),
                                 std::abs(engine.state.h_emphasis[*w] - oracle.h_emphasis[v])});
    }
    std::map<std::string, double> mine;
    for (const auto& p : path_posteriors(engine.model)) mine[path_key(p.edges)] = p.probability;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      std::vector<std::string> ids;
      for (EdgeId e : table.rows[r].edges) ids.push_back(c.graph.edge(e).id);
      const auto it = mine.find(path_key(ids));
      worst_path = std::max(worst_path, std::abs((it == mine.end() ? 0.0 : it->second) - oracle.path_posterior[r]));
    }
  }
  const bool agree = worst_edge < 1e-9 && worst_emphasis < 1e-9 && worst_path < 1e-9;
  json report{{"cases", o.cases},
              {"max_abs_error", {{"revised", worst_edge}, {"emphasis", worst_emphasis}, {"path", worst_path}}},
              {"tolerance", 1e-9},
              {"agree", agree}};
  run.write_json("verify.json", report);
  run.finish();
  std::printf("%s cases=%d revised=%.3g emphasis=%.3g path=%.3g run=%s\n", agree ? "AGREE" : "DISAGREE",
              o.cases, worst_edge, worst_emphasis, worst_path, run.id().c_str());
  return agree ? ok : mismatch;
}

int cmd_export(const Options& o) {
  Run run("export", o);
  run.input(o.model);
  run.parameter("format", o.format);
  const auto doc = load_model(o.model);
  const CegGraph g = compiled_graph(doc);
  if (o.format == "dot") {
    run.write_text("model.dot", "//", to_dot(g));
  } else if (o.format == "json") {
    run.write_json("model.json", json::parse(save_model(ModelDocument::from_graph(g))));
  } else if (o.format == "densities") {
    std::vector<std::pair<std::string, DensityGrid>> grids;
    for (const auto& e : g.edges()) {
      if (e.holding && g.vertex(e.from).timed) grids.emplace_back(e.id, discretize(*e.holding, grid_of(o)));
    }
    std::ostringstream os;
    os.precision(17);
    os << "t";
    for (const auto& [id, grid] : grids) os << ',' << id;
    os << '\n';
    const std::size_t n = grids.empty() ? 0 : grids.front().second.size();
    for (std::size_t j = 0; j < n; ++j) {
      os << static_cast<double>(j) * o.grid_dt;
      for (const auto& [id, grid] : grids) os << ',' << grid.values()[j];
      os << '\n';
    }
    run.write_text("densities.csv", "#", os.str());
  } else {
    throw ValidationError("unknown format '" + o.format + "' (dot, json, densities)");
  }
  run.finish();
  std::cout << o.format << " run=" << run.id() << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time chain event graphs: build, propagate evidence, forecast"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CEG_VERSION);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", o.out_dir, "Directory for outputs and manifest.json");
  };
  auto grid = [&](CLI::App* sub) {
    sub->add_option("--grid-dt", o.grid_dt, "Convolution grid step")->check(CLI::PositiveNumber);
    sub->add_option("--grid-tmax", o.grid_tmax, "Convolution grid horizon")->check(CLI::PositiveNumber);
  };

  auto* build = app.add_subcommand("build", "Validate a model; compile event trees to CEGs; emit DOT");
  build->add_option("model", o.model)->required()->check(CLI::ExistingFile);
  build->add_flag("--minimize", o.minimize, "Merge isomorphic vertices");
  common(build);

  auto* prop = app.add_subcommand("propagate", "Propagate evidence; write revised model and path posteriors");
  prop->add_option("model", o.model)->required()->check(CLI::ExistingFile);
  prop->add_option("evidence", o.evidence, "Evidence file (omit for none)")->check(CLI::ExistingFile);
  prop->add_option("--slices", o.slices, "Unrolling window k:l for dynamic models");
  prop->add_flag("--minimize", o.minimize, "Minimize the transporter");
  prop->add_option("--max-paths", o.max_paths, "Refuse to list more paths than this")
      ->check(CLI::PositiveNumber);
  grid(prop);
  common(prop);

  auto* fc = app.add_subcommand("forecast", "Query the future semi-Markov model");
  fc->add_option("model", o.model)->required()->check(CLI::ExistingFile);
  fc->add_option("evidence", o.evidence)->check(CLI::ExistingFile);
  fc->add_option("--query", o.query, "n-step | absorption | mean-time | first-passage");
  fc->add_option("--from", o.from, "Start state (default: root)");
  fc->add_option("--target", o.target, "Target state (default: sink)");
  fc->add_option("--steps", o.steps, "Jumps for n-step")->check(CLI::NonNegativeNumber);
  fc->add_option("--samples", o.samples, "Trajectories for first-passage")->check(CLI::PositiveNumber);
  fc->add_option("--workers", o.workers, "Sampling threads")->check(CLI::Range(1u, 256u));
  fc->add_option("--seed", o.seed, "Random seed");
  common(fc);

  auto* ver = app.add_subcommand("verify", "Compare propagation with brute-force enumeration");
  ver->add_option("--cases", o.cases, "Random models")->check(CLI::PositiveNumber);
  ver->add_option("--seed", o.seed, "Random seed");
  common(ver);

  auto* unr = app.add_subcommand("unroll", "Unroll a dynamic model over slices k..k+l");
  unr->add_option("model", o.model)->required()->check(CLI::ExistingFile);
  unr->add_option("--slices", o.slices, "Window k:l");
  common(unr);

  auto* spl = app.add_subcommand("split", "Split a dynamic model into past, present and future");
  spl->add_option("model", o.model)->required()->check(CLI::ExistingFile);
  spl->add_option("evidence", o.evidence)->check(CLI::ExistingFile);
  spl->add_option("--slices", o.slices, "Present window k:l");
  common(spl);

  auto* exp = app.add_subcommand("export", "Export a model as DOT, JSON or tabulated densities");
  exp->add_option("model", o.model)->required()->check(CLI::ExistingFile);
  exp->add_option("--format", o.format, "dot | json | densities");
  grid(exp);
  common(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : invalid;
  }

  try {
    if (*build) return cmd_build(o);
    if (*prop) return cmd_propagate(o);
    if (*fc) return cmd_forecast(o);
    if (*ver) return cmd_verify(o);
    if (*unr) return cmd_unroll(o);
    if (*spl) return cmd_split(o);
    if (*exp) return cmd_export(o);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return invalid;
  }
  return invalid;
}
