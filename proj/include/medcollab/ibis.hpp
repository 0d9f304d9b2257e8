#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/evalharness.hpp"
#include "medcollab/roster.hpp"

namespace medcollab::ibis {

struct Issue {
  std::string issue_id;
  std::string statement;
};

struct Position {
  std::string position_id;
  std::string label;
  std::string normalized_label;
};

struct EvidenceRef {
  enum class Source { evidence_base, knowledge_base };

  Source source = Source::evidence_base;
  std::string entry_id;  // evidence_base
  std::string citation;  // knowledge_base
  std::string excerpt;

  /// "E3" or "kb:<citation>".
  std::string source_text() const;
  bool operator==(const EvidenceRef&) const = default;
};

struct IbisTuple {
  Position position;
  std::string argument;
  std::vector<EvidenceRef> evidence;
  std::vector<std::string> proposed_causes;  // normalized labels this position causes
  std::vector<std::string> comorbid_with;    // normalized labels
};

struct IbisTupleSet {
  std::string agent_id;
  std::vector<IbisTuple> tuples;  // empty: gated out or abstained
  bool abstained = false;

  size_t K() const { return tuples.size(); }
};

/// Throws SchemaError naming the field when the structured block does not match the tuple schema.
void validate_block(const nlohmann::json& block);

/// Extracts the agent's fenced IBIS block. A block {"abstain": true} or a line "ABSTAIN" yields K = 0.
IbisTupleSet parse_agent_output(const std::string& raw, const std::string& agent_id,
                                const eval::SynonymTable& synonyms);

nlohmann::json to_json(const IbisTupleSet& set);
IbisTupleSet tuple_set_from_json(const nlohmann::json& j);

/// Resolution rule for a single reference: entry exists and the excerpt occurs in its text after folding and
/// whitespace squashing; knowledge-base refs need a non-empty citation.
bool resolves(const EvidenceRef& ref, const roster::EvidenceBase& eb);

struct TraceReport {
  size_t resolved = 0;
  std::vector<EvidenceRef> unresolved;
  double coverage = 0;  // resolved / total; 1.0 when the tuple cites nothing
};

TraceReport trace_evidence(const IbisTuple& tuple, const roster::EvidenceBase& eb);

using Provenance = std::set<std::string>;
using LabelPair = std::pair<std::string, std::string>;

struct PositionNode {
  std::string label;  // display label from the first proposer
  Provenance agents;
};

struct ArgumentNode {
  std::string position;  // normalized label it supports
  std::string text;
  Provenance agents;
};

struct EvidenceNode {
  std::string source;  // EvidenceRef::source_text()
  std::string excerpt;
  bool resolved = false;
  Provenance agents;
};

struct GroundsEdge {
  size_t evidence = 0;
  size_t argument = 0;
  Provenance agents;
};

enum class EdgeKind { responds_to, supports, grounds, cause, comorbid };

std::string_view edge_kind_name(EdgeKind k);

/// Flattened, typed view of a graph edge. Node ids: "I", "P:<label>", "A<n>", "V<n>".
struct Edge {
  EdgeKind kind;
  std::string from;
  std::string to;
  Provenance agents;

  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

struct GraphWarning {
  std::string agent_id;
  std::string message;

  bool operator==(const GraphWarning&) const = default;
};

struct ArgumentationGraph {
  Issue issue;
  std::map<std::string, PositionNode> positions;  // keyed by normalized label
  std::vector<ArgumentNode> arguments;
  std::vector<EvidenceNode> evidence;
  std::vector<GroundsEdge> grounds;
  std::map<LabelPair, Provenance> cause_edges;     // (cause, effect)
  std::map<LabelPair, Provenance> comorbid_links;  // stored with first < second
  std::vector<GraphWarning> warnings;

  std::vector<std::string> node_ids() const;
  std::vector<Edge> edges() const;
  /// Resolved evidence citations over all arguments supporting a position.
  size_t resolved_citations(const std::string& position) const;
};

ArgumentationGraph build_graph(const Issue& issue, const std::vector<IbisTupleSet>& sets,
                               const roster::EvidenceBase& eb);

nlohmann::json to_json(const ArgumentationGraph& g);

struct AcyclicityReport {
  bool acyclic = true;
  std::vector<std::vector<std::string>> cycles;  // each starts at its smallest label; sorted
  bool truncated = false;                        // cycle listing hit the enumeration cap
};

inline constexpr size_t kMaxListedCycles = 1024;

AcyclicityReport validate_acyclic(const std::map<LabelPair, Provenance>& cause_edges);
AcyclicityReport validate_acyclic(const ArgumentationGraph& graph);

}  // namespace medcollab::ibis
