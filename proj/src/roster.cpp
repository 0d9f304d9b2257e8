#include "medcollab/roster.hpp"

#include <future>
#include <set>
#include <sstream>

#include "medcollab/text.hpp"

namespace medcollab::roster {

using nlohmann::json;

std::string_view role_name(Role r) {
  switch (r) {
    case Role::gp: return "gp";
    case Role::specialist: return "specialist";
    case Role::examiner: return "examiner";
  }
  return "?";
}

Roster::Roster(std::vector<AgentSpec> agents, const DepartmentTaxonomy& taxonomy) : agents_(std::move(agents)) {
  std::set<std::string> ids;
  int gps = 0;
  for (size_t i = 0; i < agents_.size(); ++i) {
    const auto& a = agents_[i];
    if (a.agent_id.empty()) throw ValidationError("roster: empty agent_id");
    if (!ids.insert(a.agent_id).second) throw ValidationError("roster: duplicate agent_id '" + a.agent_id + "'");
    if (a.backend.empty()) throw ValidationError("roster: agent '" + a.agent_id + "' has no backend");
    switch (a.role) {
      case Role::gp:
        ++gps;
        gp_index_ = i;
        break;
      case Role::specialist:
        if (a.domain.empty()) throw ValidationError("roster: specialist '" + a.agent_id + "' has an empty domain");
        for (const auto& d : a.domain)
          if (!taxonomy.has_department(d))
            throw UnknownLabelError(d, "roster: specialist '" + a.agent_id + "' has unknown department '" + d + "'");
        break;
      case Role::examiner:
        if (a.domain.empty()) throw ValidationError("roster: examiner '" + a.agent_id + "' has an empty domain");
        for (const auto& m : a.domain)
          if (!taxonomy.has_modality(m))
            throw UnknownLabelError(m, "roster: examiner '" + a.agent_id + "' has unknown modality '" + m + "'");
        break;
    }
  }
  if (gps != 1) throw ValidationError("roster must contain exactly one GP, found " + std::to_string(gps));
}

Roster Roster::from_json(const json& j, const DepartmentTaxonomy& taxonomy) {
  const json* list = &j;
  if (j.is_object() && j.contains("agents")) list = &j["agents"];
  if (!list->is_array()) throw ParseError("roster must be a JSON array of agents");
  std::vector<AgentSpec> agents;
  long index = 0;
  for (const auto& rec : *list) {
    try {
      AgentSpec a;
      a.agent_id = rec.at("agent_id").get<std::string>();
      auto role = rec.at("role").get<std::string>();
      if (role == "gp" || role == "GP") a.role = Role::gp;
      else if (role == "specialist") a.role = Role::specialist;
      else if (role == "examiner") a.role = Role::examiner;
      else throw ParseError("unknown role '" + role + "'", index);
      a.domain = rec.value("domain", std::vector<std::string>{});
      a.backend = rec.at("backend").get<std::string>();
      agents.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw ParseError(std::string("roster: ") + e.what(), index);
    }
    ++index;
  }
  return Roster(std::move(agents), taxonomy);
}

Roster Roster::load(const std::filesystem::path& path, const DepartmentTaxonomy& taxonomy) {
  return from_json(read_json_file(path), taxonomy);
}

const AgentSpec* Roster::find(const std::string& agent_id) const {
  for (const auto& a : agents_)
    if (a.agent_id == agent_id) return &a;
  return nullptr;
}

std::string Roster::catalog() const {
  std::string out;
  for (const auto& a : agents_) {
    if (a.role == Role::gp) continue;
    out += "- " + a.agent_id + " | " + std::string(role_name(a.role)) + " | " + text::join(a.domain, ", ") + "\n";
  }
  return out;
}

json to_json(const RecruitmentDecision& d) {
  return {{"specialists", d.specialists},
          {"examiners", d.examiners},
          {"rationale", d.rationale},
          {"case_domains", d.case_domains}};
}

std::string render_case(const ClinicalCase& c) {
  std::string out = "Case " + c.case_id + "\nChief complaint: " + c.chief_complaint + "\n";
  if (!c.medical_history.empty()) out += "Medical history: " + c.medical_history + "\n";
  if (c.raw_findings.empty()) {
    out += "Raw findings: none (no examinations performed)\n";
  } else {
    out += "Raw findings:\n";
    for (const auto& f : c.raw_findings) out += "- [" + f.finding_id + "] (" + f.modality + ") " + f.content + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> dedupe_labels(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  std::set<std::string> keys;
  for (const auto& l : in) {
    auto k = text::label_key(l);
    if (!k.empty() && keys.insert(k).second) out.push_back(text::trim(l));
  }
  return out;
}

}  // namespace

RecruitmentDecision recruit(const ClinicalCase& c, const Roster& roster, gateway::Gateway& gw,
                            gateway::StructuredCall* info) {
  auto prompt = gateway::render(gw.templ("recruit"), {{"case", render_case(c)},
                                                      {"roster", roster.catalog()},
                                                      {"schema", gateway::schema_text("recruitment_decision")}});
  auto j = gateway::call_with_reminder(
      gw, roster.gp().backend, prompt, "recruitment_decision",
      [](const std::string& reply) { return gateway::extract_structured(reply, "recruitment_decision"); }, info);

  RecruitmentDecision d;
  d.specialists = j["specialists"].get<std::vector<std::string>>();
  d.examiners = j.value("examiners", std::vector<std::string>{});
  d.rationale = j.value("rationale", std::string());
  auto domains = j["case_domains"].get<std::vector<std::string>>();
  if (auto p = j.find("primary_department"); p != j.end()) domains.insert(domains.begin(), p->get<std::string>());
  d.case_domains = dedupe_labels(domains);

  auto check = [&](const std::vector<std::string>& ids, Role want) {
    std::set<std::string> seen;
    for (const auto& id : ids) {
      const auto* a = roster.find(id);
      if (!a) throw RecruitmentError("GP selected unknown agent '" + id + "'");
      if (a->role != want)
        throw RecruitmentError("GP selected agent '" + id + "' as " + std::string(role_name(want)) + " but it is a " +
                               std::string(role_name(a->role)));
      if (!seen.insert(id).second) throw RecruitmentError("GP selected agent '" + id + "' twice");
    }
  };
  check(d.specialists, Role::specialist);
  check(d.examiners, Role::examiner);
  if (d.specialists.empty()) throw RecruitmentError("GP selected no specialists");
  if (d.case_domains.empty()) throw RecruitmentError("GP reported no case domains");
  return d;
}

bool domain_gate(const AgentSpec& agent, const std::vector<std::string>& case_domains) {
  if (case_domains.empty()) throw PreconditionError("domain_gate: case domains must be non-empty");
  std::set<std::string> keys;
  for (const auto& d : case_domains) keys.insert(text::label_key(d));
  for (const auto& d : agent.domain)
    if (keys.contains(text::label_key(d))) return true;
  return false;
}

const EvidenceEntry* EvidenceBase::find(const std::string& entry_id) const {
  for (const auto& e : entries)
    if (e.entry_id == entry_id) return &e;
  return nullptr;
}

std::string EvidenceBase::render() const {
  std::string out;
  for (const auto& e : entries) {
    out += "[" + e.entry_id + "] ";
    if (e.origin == EvidenceEntry::Origin::clinical_record) out += "(clinical record: " + e.field + ") ";
    else out += "(exam report by " + e.examiner_id + " on " + e.finding_id + ") ";
    out += e.text + "\n";
  }
  return out;
}

json to_json(const EvidenceBase& eb) {
  json arr = json::array();
  for (const auto& e : eb.entries) {
    json j{{"entry_id", e.entry_id}, {"text", e.text}};
    if (e.origin == EvidenceEntry::Origin::clinical_record) {
      j["origin"] = {{"kind", "clinical_record"}, {"field", e.field}};
    } else {
      j["origin"] = {{"kind", "exam_report"}, {"agent_id", e.examiner_id}, {"finding_id", e.finding_id}};
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

EvidenceBase build_evidence_base(const ClinicalCase& c, const std::vector<AgentSpec>& examiners,
                                 gateway::Gateway& gw, const NoticeFn& notice, std::vector<std::string>* digests) {
  EvidenceBase eb;
  auto next_id = [&] { return "E" + std::to_string(eb.entries.size() + 1); };
  if (!text::trim(c.chief_complaint).empty())
    eb.entries.push_back({next_id(), EvidenceEntry::Origin::clinical_record, "chief_complaint", "", "", c.chief_complaint});
  if (!text::trim(c.medical_history).empty())
    eb.entries.push_back({next_id(), EvidenceEntry::Origin::clinical_record, "medical_history", "", "", c.medical_history});

  struct Job {
    const AgentSpec* examiner;
    const RawFinding* finding;
    std::future<gateway::Reply> reply;
  };
  std::vector<Job> jobs;
  const auto case_text = render_case(c);
  for (const auto& ex : examiners) {
    std::set<std::string> modalities;
    for (const auto& m : ex.domain) modalities.insert(text::label_key(m));
    bool matched = false;
    for (const auto& f : c.raw_findings) {
      if (!modalities.contains(text::label_key(f.modality))) continue;
      matched = true;
      auto prompt = gateway::render(gw.templ("examine"), {{"case", case_text},
                                                          {"modality", f.modality},
                                                          {"finding_id", f.finding_id},
                                                          {"finding", f.content}});
      jobs.push_back({&ex, &f, std::async(std::launch::async, [&gw, &ex, prompt] { return gw.call(ex.backend, prompt); })});
    }
    if (!matched && notice) notice("examiner '" + ex.agent_id + "' skipped: no finding matches its modality");
  }
  // get() on every future before rethrowing so no task outlives the gateway reference
  std::exception_ptr failure;
  std::vector<gateway::Reply> replies;
  for (auto& job : jobs) {
    try {
      replies.push_back(job.reply.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
      replies.emplace_back();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (size_t i = 0; i < jobs.size(); ++i) {
    if (digests) digests->push_back(replies[i].digest);
    eb.entries.push_back({next_id(), EvidenceEntry::Origin::exam_report, "", jobs[i].examiner->agent_id,
                          jobs[i].finding->finding_id, text::trim(replies[i].text)});
  }
  return eb;
}

}  // namespace medcollab::roster
