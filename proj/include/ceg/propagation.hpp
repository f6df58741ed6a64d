#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ceg/distributions.hpp"
#include "ceg/model.hpp"

namespace ceg {

struct ArrivalQuery {
  std::string vertex;
  double t_star = 0.0;
};

/// Compatible evidence: an intrinsic event given by the edges it retains, plus
/// optional point transition times.
struct Evidence {
  /// Edge ids the event keeps; std::nullopt keeps every edge. An id without
  /// an "@slice" suffix also selects every unrolled copy of that edge.
  std::optional<std::vector<std::string>> retained_edges;
  /// Edge ids the event rules out, matched like retained_edges.
  std::vector<std::string> excluded_edges;
  /// Holding time at the vertex visited at each depth (0 = root); nullopt
  /// entries are unknown. Its size is the number of transitions observed.
  std::optional<std::vector<std::optional<double>>> holding_times;
  /// If false, holding_times only describe a prefix and longer paths remain.
  bool path_length_known = true;
  /// Holding times pinned to named vertices; these take precedence over
  /// holding_times and do not restrict path lengths.
  std::map<std::string, double> vertex_holds;
  std::optional<ArrivalQuery> arrival_query;
  /// Template edge ids that the future model must never traverse again.
  std::vector<std::string> future_excluded;

  /// Converts absolute times t_1 < t_2 < ... (from t_0 = 0) into per-depth
  /// holds. A hold is known only when both of its end times are known.
  /// Throws ValidationError if the known times do not strictly increase.
  static std::vector<std::optional<double>> holds_from_times(
      const std::vector<std::optional<double>>& times);

  bool has_times() const noexcept { return holding_times.has_value(); }
};

/// True if `evidence_id` names `edge_id` directly or through its template id.
bool edge_id_matches(const std::string& evidence_id, const std::string& edge_id);

/// Strips a trailing "@<slice>" from an unrolled id.
std::string template_id(const std::string& id);

/// Deletes every vertex and edge that lies on no retained root-to-sink path.
/// With holding times, only paths with exactly that many transitions survive
/// (at least that many when the length is unknown). Zero-probability edges
/// are removed. Ids are preserved.
CegGraph build_transporter(const CegGraph& graph, const Evidence& evidence,
                           bool minimize_result = false);

/// Like build_transporter, but keeps the root-to-`target` paths and makes
/// `target` the sink of the result.
CegGraph build_transporter_to(const CegGraph& graph, const Evidence& evidence,
                              const std::string& target);

struct OpCounts {
  std::size_t t_potentials = 0;
  std::size_t h_potentials = 0;
  std::size_t t_emphases = 0;
  std::size_t h_emphases = 0;
  std::size_t revised = 0;

  std::size_t total() const noexcept {
    return t_potentials + h_potentials + t_emphases + h_emphases + revised;
  }
  std::string to_string() const;
};

/// Messages of one propagation run, indexed like the transporter.
struct PropagationState {
  std::vector<double> t_potential;
  std::vector<double> h_potential;
  std::vector<double> t_emphasis;
  std::vector<double> h_emphasis;
  /// Holding time used at each vertex; nullopt where unknown or untimed.
  std::vector<std::optional<double>> holding;
  std::vector<std::size_t> depth;
  /// Vertices in the order they were accommodated (sink first).
  std::vector<VertexId> accommodated;
  /// Vertices with an edge into the sink.
  std::vector<VertexId> pre_sink;
  /// Graph edges between transporter vertices that the evidence ruled out.
  std::vector<std::string> zeroed_edges;
  OpCounts ops;
};

inline OpCounts& operator+=(OpCounts& a, const OpCounts& b) {
  a.t_potentials += b.t_potentials;
  a.h_potentials += b.h_potentials;
  a.t_emphases += b.t_emphases;
  a.h_emphases += b.h_emphases;
  a.revised += b.revised;
  return a;
}

struct RevisedModel {
  CegGraph transporter;
  /// Revised transition probability per transporter edge.
  std::vector<double> revised;

  double revised_probability(const std::string& edge_id) const;
};

struct PropagationResult {
  PropagationState state;
  RevisedModel model;
};

/// Two-pass propagation over the transporter. Holding specs are carried over
/// unchanged. Vertices that are untimed, or whose holding time is unknown,
/// use an h-potential of 1.
/// Throws ZeroSupportError when some vertex has zero h-emphasis.
PropagationResult propagate(const CegGraph& graph, const CegGraph& transporter,
                            const Evidence& evidence);

/// Variant for a transporter whose sink stands for an already propagated
/// continuation: its t-emphasis is `sink_emphasis` and it is not counted as
/// a newly accommodated vertex.
PropagationResult propagate_onto(const CegGraph& graph, const CegGraph& transporter,
                                 const Evidence& evidence, double sink_emphasis);

/// build_transporter followed by propagate.
PropagationResult propagate(const CegGraph& graph, const Evidence& evidence);

struct PathProbability {
  std::vector<std::string> edges;
  std::vector<std::string> labels;
  double probability = 0.0;
};

inline constexpr std::size_t kDefaultMaxPaths = 1'000'000;

/// Root-to-sink paths of the transporter with the product of revised
/// probabilities along each, in depth-first edge order.
std::vector<PathProbability> path_posteriors(const RevisedModel& revised,
                                             std::size_t max_paths = kDefaultMaxPaths);

/// Posterior over the root-to-w routes given that the unit arrived at w at
/// total time t_star. The remaining evidence restricts the routes; holding
/// times are ignored and w stands in for the sink.
std::vector<PathProbability> arrival_time_path_posterior(const CegGraph& graph,
                                                         const Evidence& evidence,
                                                         const GridConfig& grid = {},
                                                         std::size_t max_paths = kDefaultMaxPaths);

}  // namespace ceg
