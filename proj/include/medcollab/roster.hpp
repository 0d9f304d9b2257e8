#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/casefile.hpp"
#include "medcollab/gateway.hpp"

namespace medcollab::roster {

enum class Role { gp, specialist, examiner };

std::string_view role_name(Role r);

struct AgentSpec {
  std::string agent_id;
  Role role = Role::specialist;
  std::vector<std::string> domain;  // departments for specialists, modalities for examiners
  std::string backend;              // backend name in the gateway config
};

/// Agent catalog with exactly one GP.
class Roster {
 public:
  Roster(std::vector<AgentSpec> agents, const DepartmentTaxonomy& taxonomy);

  static Roster from_json(const nlohmann::json& j, const DepartmentTaxonomy& taxonomy);
  static Roster load(const std::filesystem::path& path, const DepartmentTaxonomy& taxonomy);

  const std::vector<AgentSpec>& agents() const { return agents_; }
  const AgentSpec& gp() const { return agents_[gp_index_]; }
  const AgentSpec* find(const std::string& agent_id) const;

  /// One line per agent, for the recruitment prompt.
  std::string catalog() const;

 private:
  std::vector<AgentSpec> agents_;
  size_t gp_index_ = 0;
};

struct RecruitmentDecision {
  std::vector<std::string> specialists;
  std::vector<std::string> examiners;
  std::string rationale;
  std::vector<std::string> case_domains;  // Domain(S); front() is the primary department

  const std::string& primary_department() const { return case_domains.front(); }
};

nlohmann::json to_json(const RecruitmentDecision& d);

class RecruitmentError : public Error {
 public:
  using Error::Error;
};

/// Case text shown to agents. Never includes gold annotations.
std::string render_case(const ClinicalCase& c);

/// GP-led selection of specialists and examiners plus Domain(S).
RecruitmentDecision recruit(const ClinicalCase& c, const Roster& roster, gateway::Gateway& gw,
                            gateway::StructuredCall* info = nullptr);

/// False iff the agent's domain and the case domains are disjoint: the agent then emits nothing.
bool domain_gate(const AgentSpec& agent, const std::vector<std::string>& case_domains);

struct EvidenceEntry {
  enum class Origin { clinical_record, exam_report };

  std::string entry_id;
  Origin origin = Origin::clinical_record;
  std::string field;        // clinical_record: chief_complaint | medical_history
  std::string examiner_id;  // exam_report only
  std::string finding_id;   // exam_report only
  std::string text;
};

struct EvidenceBase {
  std::vector<EvidenceEntry> entries;

  const EvidenceEntry* find(const std::string& entry_id) const;
  /// Prompt rendering, one "[E<n>] (origin) text" block per entry.
  std::string render() const;
};

nlohmann::json to_json(const EvidenceBase& eb);

using NoticeFn = std::function<void(const std::string&)>;

/// Clinical record entries, then one examiner report per (examiner, matching finding) in roster-then-finding
/// order. Examiner calls run concurrently; ids are E1, E2, ... in that order.
EvidenceBase build_evidence_base(const ClinicalCase& c, const std::vector<AgentSpec>& examiners,
                                 gateway::Gateway& gw, const NoticeFn& notice = {},
                                 std::vector<std::string>* digests = nullptr);

}  // namespace medcollab::roster
