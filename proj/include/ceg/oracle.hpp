#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ceg/dynamic.hpp"
#include "ceg/model.hpp"
#include "ceg/propagation.hpp"

namespace ceg {

struct PathRow {
  std::vector<EdgeId> edges;
  double prior = 0.0;
};

/// Every root-to-sink path of an acyclic graph with its prior probability.
struct PathTable {
  CegGraph graph;
  std::vector<PathRow> rows;

  double total_prior() const;
};

/// Depth-first, in edge insertion order. Throws CapacityError past max_paths.
PathTable enumerate_paths(const CegGraph& graph, std::size_t max_paths = 200);

/// Whether a full path is one of the evidence's paths: every edge retained
/// and not excluded, and the path length agrees with the holding times.
bool path_consistent(const PathTable& table, const PathRow& row, const Evidence& evidence);

/// Holding time the evidence assigns to the vertex at `depth` on a path.
std::optional<double> evidence_hold(const Evidence& evidence, const Vertex& vertex,
                                    std::size_t depth);

/// Brute-force answers over a path table. Vertex quantities are conditional on
/// reaching the vertex along an evidence-consistent route; NaN marks vertices
/// no consistent path visits, and the sink is left as NaN.
struct OraclePosterior {
  /// pi(edge | E, H_w = t_w, reached w); zero on edges no consistent path uses.
  std::vector<double> edge_posterior;
  /// pi(E | reached w).
  std::vector<double> t_emphasis;
  /// pi(E, H_w = t_w | reached w), a density in t_w where the time is known.
  std::vector<double> h_emphasis;
  /// Product of edge posteriors along each row; zero for inconsistent rows.
  std::vector<double> path_posterior;
  std::vector<char> consistent;
};

/// Throws ZeroSupportError if no consistent path has positive weight.
OraclePosterior posterior_by_enumeration(const PathTable& table, const Evidence& evidence);

/// Bayes' rule with every known holding time on every path weighted in, for
/// comparison with the local-time answers above.
std::vector<double> joint_posterior_by_enumeration(const PathTable& table, const Evidence& evidence);

struct Trajectory {
  std::vector<EdgeId> edges;
  std::vector<double> holds;
};

/// Independent timed walks from the root until the sink (or max_steps).
/// Cyclic edges are followed, so dynamic templates produce multi-slice walks.
std::vector<Trajectory> simulate(const CegGraph& graph, std::size_t n, std::uint64_t seed,
                                 std::size_t max_steps = 10'000);

struct SmpTrajectory {
  std::vector<std::size_t> states;
  std::vector<double> holds;
};

std::vector<SmpTrajectory> simulate(const SmpModel& smp, const std::string& from, std::size_t n,
                                    std::uint64_t seed, std::size_t max_steps = 10'000);

struct RandomModelConfig {
  int max_depth = 6;
  int max_branching = 3;
  std::size_t max_paths = 200;
  double untimed_fraction = 0.2;
  double timed_evidence_rate = 0.7;
};

struct RandomCase {
  CegGraph graph;
  Evidence evidence;
};

/// Random acyclic CEG with shared positions, stage colours, untimed vertices
/// and intrinsic evidence for which propagation is defined.
RandomCase random_case(std::mt19937_64& rng, const RandomModelConfig& config = {});

}  // namespace ceg
