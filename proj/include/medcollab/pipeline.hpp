#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "medcollab/consensus.hpp"
#include "medcollab/transcript.hpp"

namespace medcollab::pipeline {

struct CaseResult {
  std::string case_id;
  bool ok = false;
  std::string error;
  std::string error_kind;  // replay_miss, backend, recruitment, no_participants, schema, other
  std::optional<std::string> replay_miss_digest;
  std::optional<consensus::ConsensusOutcome> outcome;
  std::optional<consensus::FinalReport> report;
};

struct CaseInputs {
  const roster::Roster& roster;
  const eval::SynonymTable& synonyms;
  gateway::Gateway& gw;
  const consensus::ConsensusConfig& config;
};

/// recruit → evidence base → consensus rounds → final report, logging every step to `log`.
/// Failures are caught, recorded as a case_failed event, and returned in the result.
CaseResult run_case(const ClinicalCase& c, const CaseInputs& in, transcript::Writer& log,
                    const nlohmann::json& header_extra = nlohmann::json::object());

/// Report file body: the final report plus case id and convergence details.
nlohmann::json report_document(const CaseResult& r);

}  // namespace medcollab::pipeline
