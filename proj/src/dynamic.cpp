#include "ceg/dynamic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "ceg/error.hpp"
#include "json.hpp"

namespace ceg {

VertexId slice_root(const CegGraph& dceg) {
  std::optional<VertexId> root;
  for (const auto& e : dceg.edges()) {
    if (!e.cyclic) continue;
    if (root && *root != e.to) {
      throw StructuralError("cyclic edges '" + e.id + "' and others target different vertices");
    }
    root = e.to;
  }
  if (!root) return dceg.root();
  if (*root != dceg.root()) {
    throw StructuralError("cyclic edges must return to the root '" + dceg.vertex(dceg.root()).id + "'");
  }
  return *root;
}

namespace {

std::string at_slice(const std::string& id, int s) { return id + "@" + std::to_string(s); }

}  // namespace

CegGraph unroll(const CegGraph& dceg, int k, int l) {
  if (k < 1 || l < 0) throw ValidationError("unroll needs k >= 1 and l >= 0");
  if (!dceg.has_cyclic_edges()) return dceg;
  const VertexId root = slice_root(dceg);
  const VertexId sink = dceg.sink();
  const std::size_t n = dceg.vertex_count();

  CegGraph out;
  std::vector<std::vector<VertexId>> idx(static_cast<std::size_t>(l) + 1,
                                         std::vector<VertexId>(n, 0));
  for (int s = k; s <= k + l; ++s) {
    for (VertexId v = 0; v < n; ++v) {
      if (v == sink) continue;
      Vertex vx = dceg.vertex(v);
      vx.id = at_slice(vx.id, s);
      vx.slice = s;
      idx[s - k][v] = out.add_vertex(std::move(vx));
    }
  }
  Vertex sv = dceg.vertex(sink);
  sv.slice = k + l;
  const VertexId new_sink = out.add_vertex(std::move(sv));
  for (auto& slice : idx) slice[sink] = new_sink;

  for (int s = k; s <= k + l; ++s) {
    const auto& cur = idx[s - k];
    for (const Edge& e : dceg.edges()) {
      Edge ue = e;
      ue.id = at_slice(e.id, s);
      ue.from = cur[e.from];
      if (e.cyclic) {
        ue.to = s < k + l ? idx[s - k + 1][root] : new_sink;
        ue.cyclic = false;
      } else {
        ue.to = cur[e.to];
      }
      out.add_edge(std::move(ue));
    }
  }
  out.set_root(idx[0][root]);
  out.set_sink(new_sink);
  return out;
}

std::size_t SmpModel::state_index(const std::string& id) const {
  auto it = std::find(states.begin(), states.end(), id);
  if (it == states.end()) throw ValidationError("unknown state '" + id + "'");
  return static_cast<std::size_t>(it - states.begin());
}

namespace {

/// Decimal texts as integers over a common power of ten, when that is exact in
/// double precision; lets ratios of stored probabilities be correctly rounded.
std::optional<std::vector<double>> common_scale(const std::vector<const Decimal*>& ds) {
  std::vector<std::pair<long long, int>> parts;  // mantissa, fractional digits
  int max_frac = 0;
  for (const Decimal* d : ds) {
    const std::string& t = d->text();
    if (t.find_first_of("eE") != std::string::npos || t.find('-') != std::string::npos) {
      return std::nullopt;
    }
    std::string digits;
    int frac = 0;
    bool dot = false;
    for (char c : t) {
      if (c == '.') {
        dot = true;
        continue;
      }
      digits += c;
      if (dot) ++frac;
    }
    if (digits.size() > 15) return std::nullopt;
    parts.emplace_back(std::stoll(digits), frac);
    max_frac = std::max(max_frac, frac);
  }
  std::vector<double> out;
  for (auto [m, f] : parts) {
    long double v = static_cast<long double>(m);
    for (int i = f; i < max_frac; ++i) v *= 10;
    if (v > 9007199254740992.0L) return std::nullopt;
    out.push_back(static_cast<double>(v));
  }
  return out;
}

/// Numerators over a shared denominator for the probabilities of `edges`.
std::pair<std::vector<double>, double> scaled_weights(const Digraph& g,
                                                      const std::vector<EdgeId>& edges) {
  std::vector<const Decimal*> ds;
  for (EdgeId e : edges) ds.push_back(&g.edge(e).prob);
  std::vector<double> w;
  if (auto exact = common_scale(ds)) {
    w = *exact;
  } else {
    for (const Decimal* d : ds) w.push_back(d->value());
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  return {w, total};
}

}  // namespace

SmpModel revise_future(const CegGraph& dceg, const Evidence& evidence) {
  const std::size_t n = dceg.vertex_count();
  std::vector<char> keep_e(dceg.edge_count(), 1);
  for (EdgeId e = 0; e < dceg.edge_count(); ++e) {
    const Edge& edge = dceg.edge(e);
    for (const auto& x : evidence.future_excluded) {
      if (edge_id_matches(x, edge.id) || edge_id_matches(x, template_id(edge.id))) keep_e[e] = 0;
    }
    if (!(edge.prob.value() > 0.0)) keep_e[e] = 0;
  }

  std::vector<char> reach(n, 0);
  std::deque<VertexId> queue{dceg.root()};
  reach[dceg.root()] = 1;
  while (!queue.empty()) {
    const VertexId v = queue.front();
    queue.pop_front();
    for (EdgeId e : dceg.out_edges(v)) {
      if (!keep_e[e] || reach[dceg.edge(e).to]) continue;
      reach[dceg.edge(e).to] = 1;
      queue.push_back(dceg.edge(e).to);
    }
  }

  SmpModel smp;
  CegGraph& g = smp.adapted;
  std::vector<VertexId> idx(n, 0);
  for (VertexId v = 0; v < n; ++v) {
    if (!reach[v]) continue;
    idx[v] = g.add_vertex(dceg.vertex(v));
    smp.states.push_back(dceg.vertex(v).id);
  }
  const std::size_t m = smp.states.size();
  smp.transition.assign(m, std::vector<double>(m, 0.0));
  smp.holding.assign(m, std::vector<HoldingMixture>(m));
  smp.absorbing.assign(m, 0);

  for (VertexId v = 0; v < n; ++v) {
    if (!reach[v]) continue;
    std::vector<EdgeId> kept;
    for (EdgeId e : dceg.out_edges(v)) {
      if (keep_e[e]) kept.push_back(e);
    }
    const std::size_t i = idx[v];
    if (kept.empty()) {
      if (dceg.out_edges(v).empty()) {
        smp.absorbing[i] = 1;
        smp.transition[i][i] = 1.0;
        continue;
      }
      throw StructuralError("vertex '" + dceg.vertex(v).id +
                            "' is still reachable but has no remaining outgoing edges");
    }
    const auto [w, total] = scaled_weights(dceg, kept);
    if (!(total > 0.0)) {
      throw StructuralError("vertex '" + dceg.vertex(v).id + "' has zero remaining probability");
    }
    std::vector<double> merged(m, 0.0);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      Edge edge = dceg.edge(kept[j]);
      edge.from = i;
      edge.to = idx[edge.to];
      const double p = w[j] / total;
      edge.prob = kept.size() == 1 || w[j] == total ? Decimal::parse("1")
                                                    : Decimal::from_double(p);
      merged[edge.to] += w[j];
      g.add_edge(std::move(edge));
    }
    for (std::size_t to = 0; to < m; ++to) {
      if (merged[to] > 0.0) smp.transition[i][to] = merged[to] / total;
    }
    for (std::size_t j = 0; j < kept.size(); ++j) {
      const Edge& edge = dceg.edge(kept[j]);
      if (!edge.holding) continue;
      const std::size_t to = idx[edge.to];
      smp.holding[i][to].components.emplace_back(w[j] / merged[to], *edge.holding);
    }
  }
  g.set_root(idx[dceg.root()]);
  if (dceg.has_sink() && reach[dceg.sink()]) g.set_sink(idx[dceg.sink()]);
  return smp;
}

ModelSplit split(const CegGraph& dceg, const Evidence& evidence, int k, int l) {
  if (k < 1 || l < 0) throw ValidationError("split needs k >= 1 and l >= 0");
  ModelSplit s;
  s.dceg = dceg;
  s.k = k;
  s.l = l;
  if (k > 1) s.past = unroll(dceg, 1, k - 2);
  s.present_graph = unroll(dceg, k, l);
  s.evidence = evidence;
  s.present = propagate(s.present_graph, evidence);
  s.future = revise_future(dceg, evidence);
  return s;
}

ModelSplit extend_present_with_past(const ModelSplit& old, const Evidence& new_evidence, int i) {
  if (i == old.k) return old;
  if (i < 1 || i > old.k) throw ValidationError("the new present must start at a slice in 1..k");
  if (!old.dceg.has_cyclic_edges()) throw StructuralError("a static graph has no past slices");

  const int last = old.k + old.l;
  CegGraph combined = unroll(old.dceg, i, last - i);
  const CegGraph& present_t = old.present.model.transporter;
  const std::string boundary = present_t.vertex(present_t.root()).id;

  CegGraph prefix_t;
  try {
    prefix_t = build_transporter_to(combined, new_evidence, boundary);
  } catch (const ContradictionError& e) {
    throw ZeroSupportError(std::string("the earlier slices cannot lead into the present: ") + e.what());
  }
  const double boundary_emphasis = old.present.state.t_emphasis[present_t.root()];
  const PropagationResult prefix = propagate_onto(combined, prefix_t, new_evidence, boundary_emphasis);
  if (!(boundary_emphasis > 0.0)) throw ZeroSupportError("present evidence has zero support");

  // Graft: prefix vertices (without its sink, which is the old root), then the present.
  CegGraph merged;
  const PropagationState& ps = prefix.state;
  const PropagationState& qs = old.present.state;
  ModelSplit out = old;
  PropagationState& st = out.present.state;
  st = PropagationState{};
  std::vector<VertexId> from_prefix(prefix_t.vertex_count(), 0);
  std::vector<VertexId> from_present(present_t.vertex_count(), 0);
  auto push_vertex = [&](const Vertex& v, double te, double he, std::optional<double> hold,
                         std::size_t depth) {
    const VertexId id = merged.add_vertex(v);
    st.t_emphasis.push_back(te);
    st.h_emphasis.push_back(he);
    st.holding.push_back(hold);
    st.depth.push_back(depth);
    return id;
  };
  std::size_t prefix_depth = 0;
  for (VertexId v = 0; v < prefix_t.vertex_count(); ++v) {
    if (v == prefix_t.sink()) continue;
    prefix_depth = std::max(prefix_depth, ps.depth[v] + 1);
  }
  for (VertexId v = 0; v < prefix_t.vertex_count(); ++v) {
    if (v == prefix_t.sink()) continue;
    from_prefix[v] = push_vertex(prefix_t.vertex(v), ps.t_emphasis[v], ps.h_emphasis[v],
                                 ps.holding[v], ps.depth[v]);
  }
  for (VertexId v = 0; v < present_t.vertex_count(); ++v) {
    from_present[v] = push_vertex(present_t.vertex(v), qs.t_emphasis[v], qs.h_emphasis[v],
                                  qs.holding[v], qs.depth[v] + prefix_depth);
  }
  from_prefix[prefix_t.sink()] = from_present[present_t.root()];

  std::vector<double> revised;
  for (EdgeId e = 0; e < prefix_t.edge_count(); ++e) {
    Edge edge = prefix_t.edge(e);
    edge.from = from_prefix[edge.from];
    edge.to = from_prefix[edge.to];
    merged.add_edge(std::move(edge));
    st.t_potential.push_back(ps.t_potential[e]);
    st.h_potential.push_back(ps.h_potential[e]);
    revised.push_back(prefix.model.revised[e]);
  }
  for (EdgeId e = 0; e < present_t.edge_count(); ++e) {
    Edge edge = present_t.edge(e);
    edge.from = from_present[edge.from];
    edge.to = from_present[edge.to];
    merged.add_edge(std::move(edge));
    st.t_potential.push_back(qs.t_potential[e]);
    st.h_potential.push_back(qs.h_potential[e]);
    revised.push_back(old.present.model.revised[e]);
  }
  merged.set_root(from_prefix[prefix_t.root()]);
  merged.set_sink(from_present[present_t.sink()]);

  for (VertexId v : ps.accommodated) st.accommodated.push_back(from_prefix[v]);
  for (VertexId v : qs.pre_sink) st.pre_sink.push_back(from_present[v]);
  st.zeroed_edges = ps.zeroed_edges;
  st.ops = ps.ops;

  // Evidence equivalent to both parts on the combined window.
  Evidence window;
  window.retained_edges.emplace();
  for (const auto& e : merged.edges()) window.retained_edges->push_back(e.id);
  for (VertexId v = 0; v < merged.vertex_count(); ++v) {
    if (st.holding[v]) window.vertex_holds[merged.vertex(v).id] = *st.holding[v];
  }
  window.future_excluded = old.evidence.future_excluded;

  out.k = i;
  out.l = last - i;
  out.past = i > 1 ? unroll(old.dceg, 1, i - 2) : CegGraph{};
  out.present_graph = std::move(combined);
  out.evidence = std::move(window);
  out.present.model.transporter = std::move(merged);
  out.present.model.revised = std::move(revised);
  return out;
}

std::vector<double> n_step_distribution(const SmpModel& smp, const std::string& from, int n) {
  if (n < 0) throw ValidationError("step count must be nonnegative");
  const std::size_t m = smp.size();
  Eigen::MatrixXd P(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) P(i, j) = smp.transition[i][j];
  }
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(m);
  x(smp.state_index(from)) = 1.0;
  for (int s = 0; s < n; ++s) x = x * P;
  return std::vector<double>(x.data(), x.data() + m);
}

namespace {

std::vector<char> can_reach(const SmpModel& smp, std::size_t target) {
  const std::size_t m = smp.size();
  std::vector<char> ok(m, 0);
  ok[target] = 1;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (ok[i]) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (smp.transition[i][j] > 0.0 && ok[j]) {
          ok[i] = 1;
          changed = true;
          break;
        }
      }
    }
  }
  return ok;
}

/// Solves x_i = b_i + sum_{j in U} P_ij x_j over the states U.
Eigen::VectorXd solve_on(const SmpModel& smp, const std::vector<std::size_t>& U,
                         const Eigen::VectorXd& b) {
  const auto u = static_cast<Eigen::Index>(U.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(u, u);
  for (Eigen::Index r = 0; r < u; ++r) {
    for (Eigen::Index c = 0; c < u; ++c) A(r, c) -= smp.transition[U[r]][U[c]];
  }
  return A.partialPivLu().solve(b);
}

}  // namespace

ForecastValue absorption_probability(const SmpModel& smp, const std::string& from,
                                     const std::string& target) {
  const std::size_t s = smp.state_index(from);
  const std::size_t t = smp.state_index(target);
  if (s == t) return {1.0, false};
  const auto ok = can_reach(smp, t);
  if (!ok[s]) return {0.0, true};
  std::vector<std::size_t> U;
  for (std::size_t i = 0; i < smp.size(); ++i) {
    if (ok[i] && i != t) U.push_back(i);
  }
  Eigen::VectorXd b(static_cast<Eigen::Index>(U.size()));
  for (std::size_t r = 0; r < U.size(); ++r) b(static_cast<Eigen::Index>(r)) = smp.transition[U[r]][t];
  const Eigen::VectorXd h = solve_on(smp, U, b);
  const auto pos = std::find(U.begin(), U.end(), s) - U.begin();
  return {std::clamp(h(pos), 0.0, 1.0), false};
}

ForecastValue mean_first_passage_time(const SmpModel& smp, const std::string& from,
                                      const std::string& target) {
  const std::size_t s = smp.state_index(from);
  const std::size_t t = smp.state_index(target);
  if (s == t) return {0.0, false};
  // States visited before the target; each must reach it almost surely.
  std::vector<char> seen(smp.size(), 0);
  std::vector<std::size_t> U;
  std::deque<std::size_t> queue{s};
  seen[s] = 1;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    U.push_back(i);
    for (std::size_t j = 0; j < smp.size(); ++j) {
      if (smp.transition[i][j] > 0.0 && j != t && !seen[j]) {
        seen[j] = 1;
        queue.push_back(j);
      }
    }
  }
  for (std::size_t i : U) {
    if (absorption_probability(smp, smp.states[i], target).value < 1.0 - 1e-9) {
      return {std::numeric_limits<double>::infinity(), true};
    }
  }
  Eigen::VectorXd b(static_cast<Eigen::Index>(U.size()));
  for (std::size_t r = 0; r < U.size(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < smp.size(); ++j) {
      const double p = smp.transition[U[r]][j];
      if (p > 0.0 && !smp.holding[U[r]][j].empty()) acc += p * smp.holding[U[r]][j].mean();
    }
    b(static_cast<Eigen::Index>(r)) = acc;
  }
  const Eigen::VectorXd mu = solve_on(smp, U, b);
  return {mu(0), false};
}

double FirstPassageSample::cdf(double t) const {
  if (trajectories == 0) return 0.0;
  const auto hits = std::upper_bound(times.begin(), times.end(), t) - times.begin();
  return static_cast<double>(hits) / static_cast<double>(trajectories);
}

FirstPassageSample first_passage_time(const SmpModel& smp, const std::string& from,
                                      const std::string& target, std::size_t samples,
                                      std::uint64_t seed, unsigned workers) {
  FirstPassageSample out;
  out.seed = seed;
  out.workers = std::max(1u, workers);
  out.trajectories = samples;
  const std::size_t s0 = smp.state_index(from);
  const std::size_t tgt = smp.state_index(target);
  if (s0 != tgt && absorption_probability(smp, from, target).unreachable) {
    out.unreachable = true;
    return out;
  }

  std::vector<std::vector<double>> cumulative(smp.size());
  for (std::size_t i = 0; i < smp.size(); ++i) {
    double acc = 0.0;
    for (double p : smp.transition[i]) cumulative[i].push_back(acc += p);
  }

  std::vector<std::vector<double>> results(out.workers);
  auto work = [&](unsigned w, std::size_t count) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(w)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto& times = results[w];
    for (std::size_t n = 0; n < count; ++n) {
      std::size_t s = s0;
      double clock = 0.0;
      bool hit = s == tgt;
      for (std::size_t step = 0; !hit && step < kMaxTrajectorySteps; ++step) {
        if (smp.absorbing[s]) break;
        const auto& cum = cumulative[s];
        const double u = unif(rng) * cum.back();
        std::size_t j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        j = std::min(j, cum.size() - 1);
        while (smp.transition[s][j] <= 0.0 && j > 0) --j;
        if (!smp.holding[s][j].empty()) clock += smp.holding[s][j].sample(rng);
        s = j;
        hit = s == tgt;
      }
      if (hit) times.push_back(clock);
    }
  };
  std::vector<std::thread> pool;
  const std::size_t base = samples / out.workers;
  const std::size_t extra = samples % out.workers;
  for (unsigned w = 0; w < out.workers; ++w) {
    pool.emplace_back(work, w, base + (w < extra ? 1 : 0));
  }
  for (auto& th : pool) th.join();

  for (const auto& r : results) out.times.insert(out.times.end(), r.begin(), r.end());
  const double k = static_cast<double>(out.times.size());
  if (k > 0) {
    const double mean = std::accumulate(out.times.begin(), out.times.end(), 0.0) / k;
    double ss = 0.0;
    for (double x : out.times) ss += (x - mean) * (x - mean);
    out.mean = mean;
    out.standard_error = k > 1 ? std::sqrt(ss / (k - 1) / k) : 0.0;
  }
  std::sort(out.times.begin(), out.times.end());
  return out;
}

std::string transition_csv(const SmpModel& smp) {
  std::ostringstream os;
  os.precision(17);
  os << "state";
  for (const auto& s : smp.states) os << ',' << s;
  os << '\n';
  for (std::size_t i = 0; i < smp.size(); ++i) {
    os << smp.states[i];
    for (double p : smp.transition[i]) os << ',' << p;
    os << '\n';
  }
  return os.str();
}

std::string holding_json(const SmpModel& smp) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < smp.size(); ++i) {
    for (std::size_t j = 0; j < smp.size(); ++j) {
      if (smp.transition[i][j] <= 0.0 || smp.absorbing[i]) continue;
      nlohmann::ordered_json row;
      row["from"] = smp.states[i];
      row["to"] = smp.states[j];
      row["probability"] = smp.transition[i][j];
      nlohmann::ordered_json comps = nlohmann::ordered_json::array();
      for (const auto& [w, spec] : smp.holding[i][j].components) {
        nlohmann::ordered_json c;
        c["weight"] = w;
        c["family"] = to_string(spec.family);
        nlohmann::ordered_json params = nlohmann::ordered_json::array();
        for (const auto& p : spec.params) params.push_back(p.text());
        c["params"] = params;
        c["convention"] = spec.convention;
        comps.push_back(c);
      }
      row["holding"] = comps;
      rows.push_back(row);
    }
  }
  nlohmann::ordered_json doc;
  doc["states"] = smp.states;
  doc["absorbing"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < smp.size(); ++i) {
    if (smp.absorbing[i]) doc["absorbing"].push_back(smp.states[i]);
  }
  doc["transitions"] = rows;
  return doc.dump(2) + "\n";
}

}  // namespace ceg
