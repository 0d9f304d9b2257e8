#include "medcollab/consensus.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <set>

#include "medcollab/text.hpp"

namespace medcollab::consensus {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void ConsensusConfig::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in (0, 1]");
  if (!(majority_fraction >= 0.5 && majority_fraction <= 1.0)) throw ValidationError("theta must lie in [0.5, 1]");
  if (max_rounds < 1) throw ValidationError("max_rounds must be >= 1");
  hdcc_params().validate();
  const auto& w = audit_weights;
  if (w.coverage < 0 || w.structure < 0 || w.consistency < 0 ||
      std::abs(w.coverage + w.structure + w.consistency - 1.0) > 1e-9)
    throw ValidationError("auditor weights must be non-negative and sum to 1");
  if (chain_cap < 1) throw ValidationError("chain cap must be >= 1");
}

json to_json(const ConsensusConfig& c) {
  return {{"lambda", c.lambda},
          {"theta", c.majority_fraction},
          {"max_rounds", c.max_rounds},
          {"auditor", c.auditor == Auditor::rule_based ? "rule" : "gp"},
          {"tau", c.tau},
          {"logic_auditing_enabled", c.logic_auditing_enabled},
          {"causal_chain_enabled", c.causal_chain_enabled},
          {"audit_weights",
           {{"coverage", c.audit_weights.coverage},
            {"structure", c.audit_weights.structure},
            {"consistency", c.audit_weights.consistency}}},
          {"chain_cap", c.chain_cap}};
}

json to_json(const LogicAudit& a) {
  json v = json::array();
  for (const auto& x : a.violations) v.push_back({{"kind", x.kind}, {"detail", x.detail}});
  return {{"agent_id", a.agent_id}, {"logic_score", a.logic_score}, {"sigma", a.sigma}, {"violations", v}};
}

WeightTable WeightTable::initial(const std::vector<std::string>& agents) {
  WeightTable t;
  for (const auto& a : agents) t.weights[a] = 1.0;
  return t;
}

double WeightTable::total() const {
  double sum = 0;
  for (const auto& [a, w] : weights) sum += w;
  return sum;
}

json to_json(const WeightTable& t) { return {{"round", t.round}, {"weights", t.weights}}; }

LogicAudit audit_logic(const ibis::IbisTupleSet& set, const roster::EvidenceBase& eb,
                       const ibis::ArgumentationGraph& graph, const std::vector<hdcc::RemovedEdge>& removed,
                       const ConsensusConfig& config) {
  LogicAudit audit;
  audit.agent_id = set.agent_id;
  if (set.tuples.empty()) return audit;

  const auto& w = config.audit_weights;
  double penalty_sum = 0;
  for (const auto& t : set.tuples) {
    const auto& key = t.position.normalized_label;
    auto trace = ibis::trace_evidence(t, eb);
    for (const auto& ref : trace.unresolved)
      audit.violations.push_back({"unresolved_evidence", "'" + key + "' cites " + ref.source_text() +
                                                             (ref.excerpt.empty() ? "" : " \"" + ref.excerpt + "\"")});

    bool structural = true;
    if (text::trim(t.argument).empty()) {
      structural = false;
      audit.violations.push_back({"empty_argument", "'" + key + "' has no argument"});
    }
    if (t.evidence.empty()) {
      structural = false;
      audit.violations.push_back({"no_evidence", "'" + key + "' cites no evidence"});
    }
    if (std::find(t.proposed_causes.begin(), t.proposed_causes.end(), key) != t.proposed_causes.end()) {
      structural = false;
      audit.violations.push_back({"self_cause", "'" + key + "' is claimed to cause itself"});
    }

    bool consistent = true;
    for (const auto& effect : t.proposed_causes)
      for (const auto& r : removed)
        if (r.from == key && r.to == effect && r.agents.contains(set.agent_id)) {
          consistent = false;
          audit.violations.push_back({"removed_cause_edge", "'" + key + "' → '" + effect + "' broke a causal cycle"});
        }

    for (const auto* refs : {&t.proposed_causes, &t.comorbid_with})
      for (const auto& label : *refs)
        if (label != key && !graph.positions.contains(label))
          audit.violations.push_back({"unresolved_label", "'" + label + "' referenced by '" + key + "' was never proposed"});

    penalty_sum += w.coverage * (1.0 - trace.coverage) + w.structure * (structural ? 0.0 : 1.0) +
                   w.consistency * (consistent ? 0.0 : 1.0);
  }
  audit.sigma = std::clamp(penalty_sum / static_cast<double>(set.tuples.size()), 0.0, 1.0);
  audit.logic_score = 1.0 - audit.sigma;
  return audit;
}

LogicAudit audit_logic_gp(const ibis::IbisTupleSet& set, const roster::EvidenceBase& eb,
                          const std::string& case_text, const std::string& gp_backend, gateway::Gateway& gw) {
  LogicAudit audit;
  audit.agent_id = set.agent_id;
  if (set.tuples.empty()) return audit;
  auto prompt = gateway::render(gw.templ("audit"), {{"case", case_text},
                                                    {"evidence", eb.render()},
                                                    {"agent", set.agent_id},
                                                    {"tuples", ibis::to_json(set)["tuples"].dump(2)},
                                                    {"schema", gateway::schema_text("audit_score")}});
  auto j = gateway::call_with_reminder(gw, gp_backend, prompt, "audit_score", [](const std::string& reply) {
    return gateway::extract_structured(reply, "audit_score");
  });
  audit.logic_score = std::clamp(j["logic_score"].get<double>(), 0.0, 1.0);
  audit.sigma = 1.0 - audit.logic_score;
  for (const auto& v : j.value("violations", json::array()))
    audit.violations.push_back({v["kind"].get<std::string>(), v.value("detail", std::string())});
  return audit;
}

WeightTable update_weights(const WeightTable& table, const std::vector<LogicAudit>& audits,
                           const ConsensusConfig& config) {
  WeightTable next = table;
  next.round = table.round + 1;
  if (!config.logic_auditing_enabled) return next;
  for (const auto& a : audits) {
    auto it = next.weights.find(a.agent_id);
    if (it == next.weights.end()) throw PreconditionError("update_weights: no weight for '" + a.agent_id + "'");
    it->second = std::clamp(it->second * (1.0 - config.lambda * a.sigma), 0.0, 1.0);
  }
  return next;
}

MajorityDecision check_majority(const std::vector<hdcc::RankedChain>& ranked, const WeightTable& table,
                                const ConsensusConfig& config) {
  MajorityDecision d;
  d.threshold = config.majority_fraction * table.total();
  if (ranked.empty()) return d;
  d.top_score = ranked.front().score.score;
  if (d.top_score > d.threshold) {
    d.reached = true;
    d.winner = ranked.front().chain->chain_id;
  }
  return d;
}

json to_json(const RoundRecord& r) {
  json sets = json::array(), chains = json::array(), audits = json::array(), scores = json::array();
  for (const auto& s : r.sets) sets.push_back(ibis::to_json(s));
  for (const auto& c : r.chains) chains.push_back(hdcc::to_json(c));
  for (const auto& a : r.audits) audits.push_back(to_json(a));
  for (const auto& s : r.scores) scores.push_back(hdcc::to_json(s));
  json majority{{"reached", r.majority.reached},
                {"top_score", r.majority.top_score},
                {"threshold", r.majority.threshold},
                {"winner", r.majority.winner ? json(*r.majority.winner) : json()}};
  return {{"round", r.round},
          {"gated", r.gated},
          {"tuple_sets", sets},
          {"requests", r.request_digests},
          {"graph", r.graph},
          {"hdcc", r.dag},
          {"chains", chains},
          {"chain_overflow", r.chain_overflow},
          {"audits", audits},
          {"scores", scores},
          {"ranking", r.ranking},
          {"rendered", r.rendered},
          {"weights", to_json(r.weights)},
          {"updated_weights", r.updated ? to_json(*r.updated) : json()},
          {"majority", majority},
          {"feedback", r.feedback}};
}

json to_json(const ConsensusOutcome& o) {
  return {{"winning_chain", o.winning_chain ? hdcc::to_json(*o.winning_chain) : json()},
          {"winning_rendered", o.winning_rendered},
          {"winning_score", o.winning_score},
          {"rounds_used", o.rounds_used},
          {"converged", o.converged},
          {"final_weights", to_json(o.final_weights)}};
}

namespace {

std::string feedback_digest(const LogicAudit* audit, const std::vector<std::string>& rendered,
                            const std::vector<hdcc::RankedChain>& ranked) {
  std::string out;
  if (audit) {
    out += "Logic audit score: " + fmt(audit->logic_score) + "\n";
    if (audit->violations.empty()) {
      out += "No violations.\n";
    } else {
      out += "Violations:\n";
      for (const auto& v : audit->violations) out += "- " + v.kind + ": " + v.detail + "\n";
    }
  }
  out += "Current top chains:\n";
  for (size_t i = 0; i < ranked.size() && i < 3; ++i)
    out += std::to_string(i + 1) + ". " + rendered[i] + " (score " + fmt(ranked[i].score.score) + ")\n";
  return out;
}

std::string issue_statement(const ClinicalCase& c) {
  return "What illness explains the presentation of case " + c.case_id + ": " + c.chief_complaint;
}

}  // namespace

ConsensusOutcome run_consensus(const ConsensusContext& ctx, const ConsensusConfig& config,
                               const RoundObserver& on_round) {
  config.validate();
  const auto& rec = ctx.recruitment;

  std::vector<const roster::AgentSpec*> participants;
  std::vector<std::string> gated;
  for (const auto& id : rec.specialists) {
    const auto* spec = ctx.roster.find(id);
    if (!spec) throw PreconditionError("recruited specialist '" + id + "' missing from roster");
    if (roster::domain_gate(*spec, rec.case_domains)) participants.push_back(spec);
    else gated.push_back(id);
  }
  if (participants.empty()) throw NoParticipantsError();

  const ibis::Issue issue{"I-" + ctx.case_.case_id, issue_statement(ctx.case_)};
  const auto case_text = roster::render_case(ctx.case_);
  const auto evidence_text = ctx.evidence.render();
  const auto params = config.hdcc_params();

  ConsensusOutcome outcome;
  WeightTable table = WeightTable::initial(rec.specialists);
  std::map<std::string, std::string> feedback;

  for (int t = 1; t <= config.max_rounds; ++t) {
    RoundRecord record;
    record.round = t;
    record.gated = gated;
    record.weights = table;

    // (a) solicit every participating specialist
    std::vector<std::future<std::pair<ibis::IbisTupleSet, gateway::StructuredCall>>> pending;
    for (const auto* spec : participants) {
      auto prompt = gateway::render(ctx.gw.templ("diagnose"), {{"agent", spec->agent_id},
                                                               {"issue", issue.statement},
                                                               {"case", case_text},
                                                               {"evidence", evidence_text},
                                                               {"feedback", feedback[spec->agent_id]},
                                                               {"schema", gateway::schema_text("ibis_tuple_set")}});
      pending.push_back(std::async(std::launch::async, [&ctx, spec, prompt] {
        gateway::StructuredCall info;
        auto set = gateway::call_with_reminder(
            ctx.gw, spec->backend, prompt, "ibis_tuple_set",
            [&](const std::string& reply) { return ibis::parse_agent_output(reply, spec->agent_id, ctx.synonyms); },
            &info);
        return std::make_pair(std::move(set), std::move(info));
      }));
    }
    std::exception_ptr failure;
    for (auto& f : pending) {
      try {
        auto [set, info] = f.get();
        record.sets.push_back(std::move(set));
        record.request_digests.insert(record.request_digests.end(), info.digests.begin(), info.digests.end());
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    // (b) argumentation graph, HDCC, candidate chains
    auto graph = ibis::build_graph(issue, record.sets, ctx.evidence);
    auto dag = hdcc::assemble_hdcc(graph);
    auto chain_set = config.causal_chain_enabled ? hdcc::enumerate_chains(dag, config.chain_cap)
                                                 : hdcc::singleton_chains(dag, config.chain_cap);
    record.graph = ibis::to_json(graph);
    record.dag = hdcc::to_json(dag);
    record.chains = chain_set.chains;
    record.chain_overflow = chain_set.overflow;

    // logic audit of this round's arguments
    std::map<std::string, double> logic;
    for (const auto& id : rec.specialists) logic[id] = 1.0;
    if (config.logic_auditing_enabled) {
      for (const auto& set : record.sets) {
        record.audits.push_back(config.auditor == Auditor::rule_based
                                    ? audit_logic(set, ctx.evidence, graph, dag.removed, config)
                                    : audit_logic_gp(set, ctx.evidence, case_text, ctx.roster.gp().backend, ctx.gw));
        logic[set.agent_id] = record.audits.back().logic_score;
      }
    }

    for (const auto& c : record.chains) record.scores.push_back(hdcc::score_chain(c, table.weights, logic, params));
    auto ranked = hdcc::rank_chains(record.scores, record.chains);
    for (const auto& r : ranked) {
      record.ranking.push_back(r.chain->chain_id);
      record.rendered.push_back(hdcc::render_chain(*r.chain, dag.positions));
    }

    // (c) majority over the weight of the agents still in the pool
    WeightTable pool;
    pool.round = table.round;
    for (const auto* spec : participants) pool.weights[spec->agent_id] = table.weights.at(spec->agent_id);
    record.majority = check_majority(ranked, pool, config);

    outcome.rounds_used = t;
    outcome.final_graph = graph;
    outcome.final_dag = dag;
    if (!ranked.empty()) {
      outcome.winning_chain = *ranked.front().chain;
      outcome.winning_score = ranked.front().score.score;
      outcome.winning_rendered = record.rendered.front();
    } else {
      outcome.winning_chain.reset();
      outcome.winning_score = 0;
      outcome.winning_rendered.clear();
    }

    if (record.majority.reached) {
      outcome.converged = true;
      outcome.final_weights = table;
      outcome.round_records.push_back(record);
      if (on_round) on_round(outcome.round_records.back());
      break;
    }

    // (d) penalize inconsistency and brief each agent for the next round
    table = update_weights(table, record.audits, config);
    record.updated = table;
    outcome.final_weights = table;
    if (t < config.max_rounds) {
      for (const auto* spec : participants) {
        const LogicAudit* audit = nullptr;
        for (const auto& a : record.audits)
          if (a.agent_id == spec->agent_id) audit = &a;
        feedback[spec->agent_id] = feedback_digest(audit, record.rendered, ranked);
      }
      record.feedback = feedback;
    }
    outcome.round_records.push_back(record);
    if (on_round) on_round(outcome.round_records.back());
  }
  return outcome;
}

json to_json(const FinalReport& r) {
  json sections = json::object();
  for (const auto& [s, t] : r.sections) sections[std::string(section_name(s))] = t;
  return {{"department", r.department},
          {"primary_diagnosis", r.primary_diagnosis},
          {"diagnosis_chain", r.diagnosis_chain},
          {"diagnoses", r.diagnoses},
          {"sections", sections}};
}

FinalReport compose_report(const ConsensusOutcome& outcome, const ConsensusContext& ctx,
                           gateway::StructuredCall* info) {
  if (!outcome.winning_chain) throw PreconditionError("compose_report: consensus produced no winning chain");
  const auto& chain = *outcome.winning_chain;
  const auto& graph = outcome.final_graph;

  FinalReport report;
  report.department = ctx.recruitment.primary_department();
  report.diagnosis_chain = hdcc::render_chain(chain, outcome.final_dag.positions);
  report.diagnoses = chain.all_positions();
  report.primary_diagnosis = chain.stages.front().positions.front();

  const auto members = chain.all_positions();
  const std::set<std::string> member_set(members.begin(), members.end());
  std::string arguments, evidence;
  std::set<std::string> cited;
  for (size_t i = 0; i < graph.arguments.size(); ++i) {
    const auto& a = graph.arguments[i];
    if (!member_set.contains(a.position)) continue;
    arguments += "- [" + graph.positions.at(a.position).label + "] " + a.text + " (" +
                 text::join(std::vector<std::string>(a.agents.begin(), a.agents.end()), ", ") + ")\n";
    for (const auto& g : graph.grounds) {
      if (g.argument != i) continue;
      const auto& ev = graph.evidence[g.evidence];
      if (!ev.resolved || !cited.insert(ev.source + "|" + ev.excerpt).second) continue;
      std::string line = "- " + ev.source;
      if (const auto* entry = ctx.evidence.find(ev.source)) line += ": " + entry->text;
      if (!ev.excerpt.empty()) line += " [excerpt: " + ev.excerpt + "]";
      evidence += line + "\n";
    }
  }

  auto prompt = gateway::render(ctx.gw.templ("report"), {{"case", roster::render_case(ctx.case_)},
                                                         {"chain", report.diagnosis_chain},
                                                         {"arguments", arguments},
                                                         {"evidence", evidence},
                                                         {"schema", gateway::schema_text("report_sections")}});
  auto j = gateway::call_with_reminder(
      ctx.gw, ctx.roster.gp().backend, prompt, "report_sections",
      [](const std::string& reply) { return gateway::extract_structured(reply, "report_sections"); }, info);
  for (Section s : kAllSections) report.sections[s] = j[std::string(section_name(s))].get<std::string>();
  return report;
}

}  // namespace medcollab::consensus

namespace medcollab::consensus {

ConsensusConfig consensus_config_from_json(const json& j) {
  ConsensusConfig c;
  try {
    c.lambda = j.at("lambda").get<double>();
    c.majority_fraction = j.at("theta").get<double>();
    c.max_rounds = j.at("max_rounds").get<int>();
    c.auditor = j.at("auditor").get<std::string>() == "gp" ? Auditor::gp_model : Auditor::rule_based;
    c.tau = j.at("tau").get<double>();
    c.logic_auditing_enabled = j.at("logic_auditing_enabled").get<bool>();
    c.causal_chain_enabled = j.at("causal_chain_enabled").get<bool>();
    const auto& w = j.at("audit_weights");
    c.audit_weights = {w.at("coverage").get<double>(), w.at("structure").get<double>(),
                       w.at("consistency").get<double>()};
    c.chain_cap = j.at("chain_cap").get<size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("consensus config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace medcollab::consensus
