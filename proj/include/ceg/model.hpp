#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ceg {

/// A real number that remembers the decimal text it was read from, so that
/// probabilities survive save/load bit-exactly and stage equality can be
/// decided on the text rather than on floating-point proximity.
class Decimal {
 public:
  Decimal() = default;

  /// Throws std::invalid_argument if `text` is not a finite decimal number.
  static Decimal parse(std::string_view text);
  /// Shortest text that round-trips to `value`.
  static Decimal from_double(double value);

  double value() const noexcept { return value_; }
  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const Decimal& a, const Decimal& b) { return a.text_ == b.text_; }

 private:
  double value_ = 0.0;
  std::string text_ = "0";
};

enum class Family { exponential, normal, weibull, empirical_grid };

const char* to_string(Family family);
std::optional<Family> parse_family(std::string_view name);

/// Parametric or tabulated density for a holding time on [0, inf).
///
/// Conventions (the `convention` tag is always explicit once constructed):
///   exponential   "rate" [lambda]  | "mean" [mu]
///   normal        "mean_sd" [mu, sigma]: mass below zero is an atom at t = 0,
///                 the density for t > 0 is the untruncated normal density
///                 "mean_sd_truncated" [mu, sigma]: truncated to [0, inf) and
///                 renormalized
///   weibull       "shape_scale" [k, s] | "scale_shape" [s, k]
///   empirical_grid "knots" [t0, f0, t1, f1, ...]: piecewise-linear density,
///                 zero outside [t0, t_last]
struct HoldingTimeSpec {
  Family family = Family::exponential;
  std::vector<Decimal> params;
  std::string convention;

  static HoldingTimeSpec make(Family family, std::vector<double> params,
                              std::string convention = {});
  static HoldingTimeSpec exponential(double rate);
  static HoldingTimeSpec normal(double mean, double sd);
  static HoldingTimeSpec weibull(double shape, double scale);
  static HoldingTimeSpec empirical(std::vector<double> knots);

  std::vector<double> values() const;
  /// Stable textual form; equal specs render identically.
  std::string canonical() const;

  friend bool operator==(const HoldingTimeSpec& a, const HoldingTimeSpec& b) {
    return a.family == b.family && a.convention == b.convention && a.params == b.params;
  }
};

std::string default_convention(Family family);

/// Returns an empty string when the spec is well formed, otherwise a message.
std::string check_spec(const HoldingTimeSpec& spec);

using VertexId = std::size_t;
using EdgeId = std::size_t;

struct Vertex {
  std::string id;
  bool timed = true;
  int slice = 1;
  std::optional<std::string> stage;
  /// Tree situations coalesced into this vertex (compiled graphs only).
  std::vector<std::string> members;
};

struct Edge {
  std::string id;
  VertexId from = 0;
  VertexId to = 0;
  std::string label;
  Decimal prob;
  std::optional<HoldingTimeSpec> holding;
  std::optional<std::string> cluster;
  bool cyclic = false;
};

std::string default_edge_id(std::string_view from_id, std::string_view label);

/// Directed multigraph with string-identified vertices and edges.
class Digraph {
 public:
  VertexId add_vertex(Vertex v);
  EdgeId add_edge(Edge e);

  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  const Vertex& vertex(VertexId v) const { return vertices_.at(v); }
  Vertex& mutable_vertex(VertexId v) { return vertices_.at(v); }
  const Edge& edge(EdgeId e) const { return edges_.at(e); }
  Edge& mutable_edge(EdgeId e) { return edges_.at(e); }

  const std::vector<Vertex>& vertices() const noexcept { return vertices_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::span<const EdgeId> out_edges(VertexId v) const { return out_.at(v); }
  std::span<const EdgeId> in_edges(VertexId v) const { return in_.at(v); }

  std::optional<VertexId> find_vertex(std::string_view id) const;
  std::optional<EdgeId> find_edge(std::string_view id) const;
  VertexId vertex_index(std::string_view id) const;
  EdgeId edge_index(std::string_view id) const;

  bool has_root() const noexcept { return root_.has_value(); }
  VertexId root() const;
  void set_root(VertexId v);

  bool has_cyclic_edges() const;

 private:
  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<EdgeId>> out_;
  std::vector<std::vector<EdgeId>> in_;
  std::unordered_map<std::string, VertexId> vertex_by_id_;
  std::unordered_map<std::string, EdgeId> edge_by_id_;
  std::optional<VertexId> root_;
};

/// Vertices in topological order, ignoring cyclic edges.
/// Throws StructuralError if the non-cyclic part has a cycle.
std::vector<VertexId> topological_order(const Digraph& g);

/// Hued event tree: vertices are situations or leaves, edges carry stage
/// probabilities, cluster colours and holding-time specs. A tree edge marked
/// cyclic ends in a leaf that stands for a return to the root (slice
/// templates of dynamic models).
class EventTree : public Digraph {
 public:
  bool is_leaf(VertexId v) const { return out_edges(v).empty(); }
  std::vector<VertexId> situations() const;
};

/// Compiled (dynamic) chain event graph: one vertex per position plus a single
/// sink. Cyclic edges, when present, make it a dynamic template.
class CegGraph : public Digraph {
 public:
  bool has_sink() const noexcept { return sink_.has_value(); }
  VertexId sink() const;
  void set_sink(VertexId v);

 private:
  std::optional<VertexId> sink_;
};

/// stage id -> situation ids.
struct StagePartition {
  std::map<std::string, std::vector<std::string>> stages;

  std::optional<std::string> stage_of(std::string_view vertex_id) const;
};

struct TimedStep {
  VertexId vertex = 0;
  EdgeId edge = 0;
  double holding = 0.0;
};

struct TimedPath {
  std::vector<TimedStep> steps;
  std::size_t length() const noexcept { return steps.size(); }
};

struct Violation {
  enum class Kind {
    structure,
    probability_sum,
    staging,
    cluster,
    holding_spec,
    unreachable,
  };
  Kind kind = Kind::structure;
  std::vector<std::string> subjects;
  std::string message;
  double deficit = 0.0;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  std::string to_string() const;
};

inline constexpr double kProbabilitySumTolerance = 1e-9;

ValidationReport validate(const EventTree& tree, const StagePartition& stages);
ValidationReport validate(const CegGraph& graph);

}  // namespace ceg
