#include "medcollab/pipeline.hpp"

namespace medcollab::pipeline {

using nlohmann::json;

CaseResult run_case(const ClinicalCase& c, const CaseInputs& in, transcript::Writer& log, const json& header_extra) {
  CaseResult result;
  result.case_id = c.case_id;

  json header = header_extra;
  header["schema"] = transcript::kSchema;
  header["case_id"] = c.case_id;
  header["consensus"] = consensus::to_json(in.config);
  log.append("header", header);

  try {
    ClinicalCase visible = c;
    visible.gold.reset();
    log.append("case", case_to_json(visible));

    gateway::StructuredCall recruit_call;
    auto decision = roster::recruit(c, in.roster, in.gw, &recruit_call);
    auto rec_json = roster::to_json(decision);
    rec_json["requests"] = recruit_call.digests;
    log.append("recruitment", rec_json);

    std::vector<roster::AgentSpec> examiners;
    for (const auto& id : decision.examiners) examiners.push_back(*in.roster.find(id));
    std::vector<std::string> notices, digests;
    auto eb = roster::build_evidence_base(
        c, examiners, in.gw, [&](const std::string& n) { notices.push_back(n); }, &digests);
    log.append("evidence_base", {{"entries", roster::to_json(eb)}, {"notices", notices}, {"requests", digests}});

    consensus::ConsensusContext ctx{c, in.roster, decision, eb, in.synonyms, in.gw};
    auto outcome = consensus::run_consensus(ctx, in.config,
                                            [&](const consensus::RoundRecord& r) { log.append("round", to_json(r)); });
    log.append("outcome", consensus::to_json(outcome));

    gateway::StructuredCall report_call;
    auto report = consensus::compose_report(outcome, ctx, &report_call);
    auto report_json = consensus::to_json(report);
    report_json["requests"] = report_call.digests;
    log.append("final_report", report_json);

    result.outcome = std::move(outcome);
    result.report = std::move(report);
    result.ok = true;
  } catch (const ReplayMiss& e) {
    result.error = e.what();
    result.error_kind = "replay_miss";
    result.replay_miss_digest = e.digest();
  } catch (const BackendError& e) {
    result.error = e.what();
    result.error_kind = "backend";
  } catch (const roster::RecruitmentError& e) {
    result.error = e.what();
    result.error_kind = "recruitment";
  } catch (const consensus::NoParticipantsError& e) {
    result.error = e.what();
    result.error_kind = "no_participants";
  } catch (const SchemaError& e) {
    result.error = e.what();
    result.error_kind = "schema";
  } catch (const NoStructuredBlock& e) {
    result.error = e.what();
    result.error_kind = "schema";
  } catch (const std::exception& e) {
    result.error = e.what();
    result.error_kind = "other";
  }
  if (!result.ok) log.append("case_failed", {{"error", result.error}, {"kind", result.error_kind}});
  return result;
}

json report_document(const CaseResult& r) {
  if (!r.report || !r.outcome) throw PreconditionError("report_document: case '" + r.case_id + "' has no report");
  json doc = consensus::to_json(*r.report);
  doc["case_id"] = r.case_id;
  doc["converged"] = r.outcome->converged;
  doc["rounds_used"] = r.outcome->rounds_used;
  doc["winning_score"] = r.outcome->winning_score;
  return doc;
}

}  // namespace medcollab::pipeline
