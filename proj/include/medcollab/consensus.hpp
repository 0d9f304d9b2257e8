#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/hdcc.hpp"
#include "medcollab/ibis.hpp"
#include "medcollab/roster.hpp"

namespace medcollab::consensus {

enum class Auditor { rule_based, gp_model };

/// Blend used by the rule-based auditor; the three terms sum to 1.
struct AuditWeights {
  double coverage = 0.7;
  double structure = 0.2;
  double consistency = 0.1;
};

struct ConsensusConfig {
  double lambda = 0.5;             // penalty coefficient, (0, 1]
  double majority_fraction = 0.5;  // theta, [0.5, 1]
  int max_rounds = 5;
  Auditor auditor = Auditor::rule_based;
  double tau = 0.5;
  bool logic_auditing_enabled = true;
  bool causal_chain_enabled = true;
  AuditWeights audit_weights;
  size_t chain_cap = hdcc::kDefaultChainCap;

  void validate() const;
  hdcc::HdccParams hdcc_params() const { return {tau}; }
};

nlohmann::json to_json(const ConsensusConfig& c);

struct AuditViolation {
  std::string kind;
  std::string detail;
};

struct LogicAudit {
  std::string agent_id;
  double logic_score = 1.0;
  double sigma = 0.0;
  std::vector<AuditViolation> violations;
};

nlohmann::json to_json(const LogicAudit& a);

struct WeightTable {
  std::map<std::string, double> weights;
  int round = 0;

  static WeightTable initial(const std::vector<std::string>& agents);
  double total() const;
};

nlohmann::json to_json(const WeightTable& t);

/// Scores one specialist's argumentation. `removed` is the cycle-resolution log of the round.
LogicAudit audit_logic(const ibis::IbisTupleSet& set, const roster::EvidenceBase& eb,
                       const ibis::ArgumentationGraph& graph, const std::vector<hdcc::RemovedEdge>& removed,
                       const ConsensusConfig& config);

/// gp_model auditor: the GP backend returns the score and violations; the score is clamped into [0, 1].
LogicAudit audit_logic_gp(const ibis::IbisTupleSet& set, const roster::EvidenceBase& eb,
                          const std::string& case_text, const std::string& gp_backend, gateway::Gateway& gw);

/// w_i <- w_i * (1 - lambda * sigma_i) for every audited agent; round advances by one.
WeightTable update_weights(const WeightTable& table, const std::vector<LogicAudit>& audits,
                           const ConsensusConfig& config);

struct MajorityDecision {
  bool reached = false;
  std::optional<std::string> winner;
  double top_score = 0;
  double threshold = 0;  // theta * total weight
};

MajorityDecision check_majority(const std::vector<hdcc::RankedChain>& ranked, const WeightTable& table,
                                const ConsensusConfig& config);

struct RoundRecord {
  int round = 0;
  std::vector<std::string> gated;  // specialists excluded by the domain gate (empty output)
  std::vector<ibis::IbisTupleSet> sets;
  std::vector<std::string> request_digests;
  nlohmann::json graph;
  nlohmann::json dag;
  std::vector<hdcc::CausalChain> chains;
  bool chain_overflow = false;
  std::vector<LogicAudit> audits;
  std::vector<hdcc::ChainScore> scores;
  std::vector<std::string> ranking;  // chain ids, best first
  std::vector<std::string> rendered;  // rendered chains in ranking order
  WeightTable weights;                // w^(t) used for this round's scores
  std::optional<WeightTable> updated;  // w^(t+1) when the loop continues
  MajorityDecision majority;
  std::map<std::string, std::string> feedback;  // digest sent to each agent for the next round
};

nlohmann::json to_json(const RoundRecord& r);

struct ConsensusOutcome {
  std::optional<hdcc::CausalChain> winning_chain;
  double winning_score = 0;
  std::string winning_rendered;
  int rounds_used = 0;
  bool converged = false;
  WeightTable final_weights;
  std::vector<RoundRecord> round_records;
  ibis::ArgumentationGraph final_graph;
  hdcc::CausalDag final_dag;
};

nlohmann::json to_json(const ConsensusOutcome& o);

class NoParticipantsError : public Error {
 public:
  NoParticipantsError() : Error("every recruited specialist was gated out of the case domains") {}
};

struct ConsensusContext {
  const ClinicalCase& case_;
  const roster::Roster& roster;
  const roster::RecruitmentDecision& recruitment;
  const roster::EvidenceBase& evidence;
  const eval::SynonymTable& synonyms;
  gateway::Gateway& gw;
};

using RoundObserver = std::function<void(const RoundRecord&)>;

/// GP-led rounds of solicitation, argument graph, HDCC scoring, majority check and weight update.
ConsensusOutcome run_consensus(const ConsensusContext& ctx, const ConsensusConfig& config,
                               const RoundObserver& on_round = {});

struct FinalReport {
  std::string department;
  std::string primary_diagnosis;
  std::string diagnosis_chain;
  std::vector<std::string> diagnoses;  // normalized labels in chain order
  std::map<Section, std::string> sections;
};

nlohmann::json to_json(const FinalReport& r);

/// One GP call writes the DB/DD/TP/TX sections for the winning chain.
FinalReport compose_report(const ConsensusOutcome& outcome, const ConsensusContext& ctx,
                           gateway::StructuredCall* info = nullptr);

}  // namespace medcollab::consensus

namespace medcollab::consensus {

ConsensusConfig consensus_config_from_json(const nlohmann::json& j);

}  // namespace medcollab::consensus
