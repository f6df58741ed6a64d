#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ceg/model.hpp"
#include "ceg/propagation.hpp"

namespace ceg {

/// A model file as loaded: either a hued event tree or a compiled graph,
/// with its stage partition. The schema is described in docs/model-format.md.
struct ModelDocument {
  enum class Kind { event_tree, ceg };

  Kind kind = Kind::ceg;
  EventTree tree;
  CegGraph graph;
  StagePartition stages;
  bool revised = false;

  /// The loaded graph regardless of kind, for code that only walks edges.
  const Digraph& digraph() const;

  static ModelDocument from_tree(EventTree tree, StagePartition stages);
  static ModelDocument from_graph(CegGraph graph);
};

/// Throws ParseError with a JSON-pointer path on schema violations.
ModelDocument parse_model(std::string_view json_text);
ModelDocument load_model(const std::filesystem::path& path);
/// Deterministic rendering: fixed key order, probabilities as decimal strings.
std::string save_model(const ModelDocument& doc);

/// Revised model: transporter with revised probabilities and "revised": true.
/// The prior probability of each edge is kept under "prior_prob".
std::string save_revised(const RevisedModel& revised);

Evidence parse_evidence(std::string_view json_text);
Evidence load_evidence(const std::filesystem::path& path);
std::string save_evidence(const Evidence& evidence);

/// Reads a whole file, throwing ParseError (empty path) if it cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace ceg
