#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ceg/distributions.hpp"
#include "ceg/model.hpp"
#include "ceg/propagation.hpp"

namespace ceg {

/// Root of every passage-slice: the common target of the cyclic edges.
/// Throws StructuralError if cyclic edges disagree on their target.
VertexId slice_root(const CegGraph& dceg);

/// Acyclic graph of slices k..k+l. Vertex v of slice s becomes "v@s" and edge
/// e becomes "e@s"; cyclic edges lead to the next slice's root, and out of the
/// last slice into the shared sink. A template without cyclic edges is
/// returned unchanged.
CegGraph unroll(const CegGraph& dceg, int k, int l);

/// Semi-Markov view of an adapted dynamic graph. Parallel edges between two
/// states are merged, their holding times mixed by edge probability.
struct SmpModel {
  CegGraph adapted;
  std::vector<std::string> states;
  std::vector<std::vector<double>> transition;
  std::vector<std::vector<HoldingMixture>> holding;
  std::vector<char> absorbing;

  std::size_t state_index(const std::string& id) const;
  std::size_t size() const noexcept { return states.size(); }
};

/// Removes the template edges listed in evidence.future_excluded, renormalizes
/// the remaining probabilities at each vertex, drops what is no longer
/// reachable and builds the SMP. Throws StructuralError if a reachable vertex
/// is left without outgoing edges.
SmpModel revise_future(const CegGraph& dceg, const Evidence& evidence);

struct ModelSplit {
  CegGraph dceg;
  int k = 1;
  int l = 0;
  /// Slices 1..k-1; empty when k = 1.
  CegGraph past;
  /// Unrolled slices k..k+l before evidence.
  CegGraph present_graph;
  Evidence evidence;
  PropagationResult present;
  SmpModel future;

  bool has_past() const noexcept { return past.vertex_count() > 0; }
};

ModelSplit split(const CegGraph& dceg, const Evidence& evidence, int k, int l);

/// Brings slices i..k-1 into the present. Only the new slices are propagated:
/// their backward pass starts from the old present root using its t-emphasis,
/// and everything already accommodated is reused. `new_evidence` is matched
/// against edges of slices i..k-1; edges there that would leave the process
/// before slice k are ruled out.
/// The returned split has k = i. Its present.state.ops counts only the new
/// operations.
ModelSplit extend_present_with_past(const ModelSplit& split, const Evidence& new_evidence, int i);

/// Distribution over states after n jumps of the embedded chain.
std::vector<double> n_step_distribution(const SmpModel& smp, const std::string& from, int n);

struct ForecastValue {
  double value = 0.0;
  /// Set when the target cannot be reached from the start state.
  bool unreachable = false;
};

/// Probability of ever entering `target` from `from`.
ForecastValue absorption_probability(const SmpModel& smp, const std::string& from,
                                     const std::string& target);

/// Expected time to enter `target` from `from`, solved exactly from the
/// embedded chain and the holding means. Requires the target to be reached
/// with probability one; otherwise `unreachable` is set.
ForecastValue mean_first_passage_time(const SmpModel& smp, const std::string& from,
                                      const std::string& target);

struct FirstPassageSample {
  std::vector<double> times;  // sorted, one per trajectory that reached the target
  std::size_t trajectories = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  bool unreachable = false;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  double hit_fraction() const noexcept {
    return trajectories ? static_cast<double>(times.size()) / trajectories : 0.0;
  }
  /// Empirical P(T <= t) among all trajectories.
  double cdf(double t) const;
};

inline constexpr std::size_t kDefaultForecastSamples = 100'000;
inline constexpr std::size_t kMaxTrajectorySteps = 100'000;

/// Monte Carlo first-passage times. Worker w draws from its own stream seeded
/// with (seed, w); results are merged in worker order, so the output depends
/// only on seed, samples and workers.
FirstPassageSample first_passage_time(const SmpModel& smp, const std::string& from,
                                      const std::string& target,
                                      std::size_t samples = kDefaultForecastSamples,
                                      std::uint64_t seed = 1, unsigned workers = 4);

/// Transition matrix as CSV with a header row of state ids.
std::string transition_csv(const SmpModel& smp);
/// Merged holding specs per transition as JSON.
std::string holding_json(const SmpModel& smp);

}  // namespace ceg
