#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ceg/model.hpp"

namespace ceg {

/// Partition of the situations of a hued tree into positions.
struct PositionPartition {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Blocks of tree situation indices, ordered breadth-first by their first
  /// member (the root's block comes first).
  std::vector<std::vector<VertexId>> blocks;
  /// Block index per tree vertex; npos for leaves.
  std::vector<std::size_t> block_of;
};

/// Rendering used when comparing probabilities inside structural signatures.
std::string probability_key(double p);

/// Two situations share a position iff their rooted subtrees are isomorphic
/// respecting edge labels, probabilities, stage colours and cluster colours.
/// Decided bottom-up by canonical signatures. Situations outside every stage
/// carry a colour of their own.
PositionPartition compute_positions(const EventTree& tree, const StagePartition& stages);

/// Coalesces each position into one vertex ("w0", "w1", ... breadth-first)
/// and all leaves into the sink "w_inf". Leaves reached through cyclic tree
/// edges become cyclic edges back to the root position. Stage colours are
/// kept only for stages that span several positions.
CegGraph compile_ceg(const EventTree& tree, const PositionPartition& positions,
                     const StagePartition& stages);

/// Merges vertices whose rooted subgraphs are isomorphic preserving labels,
/// probabilities, holding specs and colours. Vertices without a stage colour
/// are never merged with another vertex. Requires an acyclic graph.
CegGraph minimize(const CegGraph& graph);

/// Graphviz renderings: stages as fill colours, clusters as edge colours,
/// probabilities on edge labels.
std::string to_dot(const EventTree& tree, const StagePartition& stages);
std::string to_dot(const CegGraph& graph);

}  // namespace ceg
