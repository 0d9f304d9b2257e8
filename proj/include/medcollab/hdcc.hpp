#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/ibis.hpp"

namespace medcollab::hdcc {

using ibis::LabelPair;
using ibis::Provenance;

struct DagPosition {
  std::string label;  // display label
  Provenance agents;
  size_t resolved_citations = 0;
};

struct RemovedEdge {
  std::string from;
  std::string to;
  Provenance agents;
};

/// Positions with causal edges and comorbid links after cycle resolution.
struct CausalDag {
  std::map<std::string, DagPosition> positions;  // keyed by normalized label
  std::map<LabelPair, Provenance> cause_edges;
  std::map<LabelPair, Provenance> comorbid_links;
  std::vector<RemovedEdge> removed;  // cycle-resolution log, in removal order
};

/// Copies the graph's positions and relations, then breaks every cycle by repeatedly deleting the in-cycle
/// cause-edge with the fewest proposers (ties: smallest (from, to)).
CausalDag assemble_hdcc(const ibis::ArgumentationGraph& graph);

/// Same resolution over a bare edge set; returns removed edges in order.
std::vector<RemovedEdge> resolve_cycles(std::map<LabelPair, Provenance>& cause_edges);

struct ChainStage {
  std::vector<std::string> positions;  // normalized labels, sorted; size > 1 means comorbidity

  std::string key() const;  // members joined by " + "
  bool operator==(const ChainStage&) const = default;
};

struct CausalChain {
  std::string chain_id;
  std::vector<ChainStage> stages;
  Provenance supporters;
  size_t resolved_citations = 0;

  size_t length() const { return stages.size(); }
  std::vector<std::string> all_positions() const;
};

struct ChainSet {
  std::vector<CausalChain> chains;
  bool overflow = false;  // more maximal paths existed than the cap
};

inline constexpr size_t kDefaultChainCap = 256;

/// Folds comorbid positions with identical causal neighbourhoods into stages.
std::vector<ChainStage> fold_stages(const CausalDag& dag);

/// Maximal stage paths sorted by (longer first, then lexicographic stage-label sequence), truncated to `cap`.
ChainSet enumerate_chains(const CausalDag& dag, size_t cap = kDefaultChainCap);

/// Each position as its own length-1 chain (used when causal chaining is switched off).
ChainSet singleton_chains(const CausalDag& dag, size_t cap = kDefaultChainCap);

struct HdccParams {
  double tau = 0.5;

  void validate() const;
};

struct ChainScore {
  std::string chain_id;
  double score = 0;
  std::vector<std::pair<std::string, double>> contributing_agents;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

/// Sum of w_i over supporters whose Logic(A_i) is strictly above tau.
ChainScore score_chain(const CausalChain& chain, const std::map<std::string, double>& weights,
                       const std::map<std::string, double>& logic, const HdccParams& params);

struct RankedChain {
  const CausalChain* chain;
  ChainScore score;
};

/// Descending score; ties by resolved citations, then length, then first-stage label, then full label sequence.
std::vector<RankedChain> rank_chains(const std::vector<ChainScore>& scores, const std::vector<CausalChain>& chains);

/// Stage labels joined by " → " with comorbid members joined by " + ", using display labels.
std::string render_chain(const CausalChain& chain, const std::map<std::string, DagPosition>& positions);

nlohmann::json to_json(const CausalChain& c);
nlohmann::json to_json(const ChainScore& s);
nlohmann::json to_json(const CausalDag& dag);

}  // namespace medcollab::hdcc
