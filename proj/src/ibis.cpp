#include "medcollab/ibis.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <regex>

#include "medcollab/gateway.hpp"
#include "medcollab/text.hpp"

namespace medcollab::ibis {

using nlohmann::json;

std::string EvidenceRef::source_text() const {
  return source == Source::evidence_base ? entry_id : "kb:" + citation;
}

namespace {

const std::regex kEntryId(R"(E[0-9]+)");

const json& tuple_list(const json& block, bool& abstain) {
  abstain = false;
  if (block.is_object() && block.contains("abstain")) {
    if (!block["abstain"].is_boolean()) throw SchemaError("abstain", "must be a boolean");
    if (block["abstain"].get<bool>()) {
      abstain = true;
      return block;
    }
  }
  if (block.is_object() && block.contains("tuples")) {
    if (!block["tuples"].is_array()) throw SchemaError("tuples", "must be an array");
    return block["tuples"];
  }
  return block;
}

void validate_tuple(const json& t, size_t i) {
  const auto where = "tuple " + std::to_string(i) + ": ";
  if (!t.is_object()) throw SchemaError("tuples", where + "must be an object");
  if (!t.contains("position")) throw SchemaError("position", where + "missing");
  if (!t["position"].is_string() || text::trim(t["position"].get<std::string>()).empty())
    throw SchemaError("position", where + "must be a non-empty string");
  if (!t.contains("argument")) throw SchemaError("argument", where + "missing");
  if (!t["argument"].is_string()) throw SchemaError("argument", where + "must be a string");
  if (!t.contains("evidence")) throw SchemaError("evidence", where + "missing");
  const auto& ev = t["evidence"];
  if (!ev.is_array()) throw SchemaError("evidence", where + "must be an array");
  if (ev.empty()) throw SchemaError("evidence", where + "must cite at least one piece of evidence");
  for (const auto& e : ev) {
    std::string source;
    if (e.is_string()) {
      source = e.get<std::string>();
    } else if (e.is_object()) {
      if (!e.contains("source") || !e["source"].is_string()) throw SchemaError("evidence.source", where + "missing");
      if (e.contains("excerpt") && !e["excerpt"].is_string())
        throw SchemaError("evidence.excerpt", where + "must be a string");
      source = e["source"].get<std::string>();
    } else {
      throw SchemaError("evidence", where + "items must be strings or objects");
    }
    source = text::trim(source);
    if (!std::regex_match(source, kEntryId) && !source.starts_with("kb:"))
      throw SchemaError("evidence.source", where + "'" + source + "' is neither an entry id nor kb:<citation>");
  }
  for (const char* key : {"proposed_causes", "comorbid_with"}) {
    if (!t.contains(key)) continue;
    if (!t[key].is_array()) throw SchemaError(key, where + "must be an array");
    for (const auto& e : t[key])
      if (!e.is_string()) throw SchemaError(key, where + "must contain only strings");
  }
}

EvidenceRef parse_ref(const json& e) {
  EvidenceRef r;
  std::string source = text::trim(e.is_string() ? e.get<std::string>() : e["source"].get<std::string>());
  if (e.is_object()) r.excerpt = e.value("excerpt", std::string());
  if (source.starts_with("kb:")) {
    r.source = EvidenceRef::Source::knowledge_base;
    r.citation = text::trim(source.substr(3));
  } else {
    r.source = EvidenceRef::Source::evidence_base;
    r.entry_id = source;
  }
  return r;
}

bool has_abstain_line(const std::string& raw) {
  size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find('\n', start);
    if (end == std::string::npos) end = raw.size();
    if (text::trim(std::string_view(raw).substr(start, end - start)) == "ABSTAIN") return true;
    start = end + 1;
  }
  return false;
}

}  // namespace

void validate_block(const json& block) {
  bool abstain = false;
  const json& list = tuple_list(block, abstain);
  if (abstain) return;
  if (list.is_object()) {
    validate_tuple(list, 0);
    return;
  }
  if (!list.is_array()) throw SchemaError("<root>", "expected a tuple object or a list of tuples");
  for (size_t i = 0; i < list.size(); ++i) validate_tuple(list[i], i);
}

IbisTupleSet parse_agent_output(const std::string& raw, const std::string& agent_id,
                                const eval::SynonymTable& synonyms) {
  IbisTupleSet set;
  set.agent_id = agent_id;
  auto block_text = gateway::first_fenced_block(raw);
  if (!block_text) {
    if (has_abstain_line(raw)) {
      set.abstained = true;
      return set;
    }
    throw NoStructuredBlock();
  }
  json block;
  try {
    block = json::parse(*block_text);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
  }
  validate_block(block);
  bool abstain = false;
  const json& list = tuple_list(block, abstain);
  if (abstain) {
    set.abstained = true;
    return set;
  }
  std::vector<json> items;
  if (list.is_object()) items.push_back(list);
  else items.assign(list.begin(), list.end());

  for (size_t k = 0; k < items.size(); ++k) {
    const auto& t = items[k];
    IbisTuple tuple;
    tuple.position.position_id = agent_id + ".P" + std::to_string(k + 1);
    tuple.position.label = text::squash_ws(t["position"].get<std::string>());
    tuple.position.normalized_label = eval::norm_term(tuple.position.label, synonyms);
    tuple.argument = t["argument"].get<std::string>();
    for (const auto& e : t["evidence"]) tuple.evidence.push_back(parse_ref(e));
    for (const auto& c : t.value("proposed_causes", json::array()))
      tuple.proposed_causes.push_back(eval::norm_term(c.get<std::string>(), synonyms));
    for (const auto& c : t.value("comorbid_with", json::array()))
      tuple.comorbid_with.push_back(eval::norm_term(c.get<std::string>(), synonyms));
    set.tuples.push_back(std::move(tuple));
  }
  return set;
}

json to_json(const IbisTupleSet& set) {
  json tuples = json::array();
  for (const auto& t : set.tuples) {
    json ev = json::array();
    for (const auto& e : t.evidence) ev.push_back({{"source", e.source_text()}, {"excerpt", e.excerpt}});
    tuples.push_back({{"position_id", t.position.position_id},
                      {"position", t.position.label},
                      {"normalized", t.position.normalized_label},
                      {"argument", t.argument},
                      {"evidence", ev},
                      {"proposed_causes", t.proposed_causes},
                      {"comorbid_with", t.comorbid_with}});
  }
  return {{"agent_id", set.agent_id}, {"abstained", set.abstained}, {"K", set.K()}, {"tuples", tuples}};
}

IbisTupleSet tuple_set_from_json(const json& j) {
  IbisTupleSet set;
  set.agent_id = j.at("agent_id").get<std::string>();
  set.abstained = j.value("abstained", false);
  for (const auto& t : j.at("tuples")) {
    IbisTuple tuple;
    tuple.position = {t.at("position_id").get<std::string>(), t.at("position").get<std::string>(),
                      t.at("normalized").get<std::string>()};
    tuple.argument = t.at("argument").get<std::string>();
    for (const auto& e : t.at("evidence")) tuple.evidence.push_back(parse_ref(e));
    tuple.proposed_causes = t.at("proposed_causes").get<std::vector<std::string>>();
    tuple.comorbid_with = t.at("comorbid_with").get<std::vector<std::string>>();
    set.tuples.push_back(std::move(tuple));
  }
  return set;
}

bool resolves(const EvidenceRef& ref, const roster::EvidenceBase& eb) {
  if (ref.source == EvidenceRef::Source::knowledge_base) return !text::trim(ref.citation).empty();
  const auto* entry = eb.find(ref.entry_id);
  if (!entry) return false;
  return text::label_key(entry->text).find(text::label_key(ref.excerpt)) != std::string::npos;
}

TraceReport trace_evidence(const IbisTuple& tuple, const roster::EvidenceBase& eb) {
  TraceReport r;
  for (const auto& ref : tuple.evidence) {
    if (resolves(ref, eb)) ++r.resolved;
    else r.unresolved.push_back(ref);
  }
  r.coverage = tuple.evidence.empty() ? 1.0
                                      : static_cast<double>(r.resolved) / static_cast<double>(tuple.evidence.size());
  return r;
}

std::string_view edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::responds_to: return "responds-to";
    case EdgeKind::supports: return "supports";
    case EdgeKind::grounds: return "grounds";
    case EdgeKind::cause: return "cause";
    case EdgeKind::comorbid: return "comorbid";
  }
  return "?";
}

std::vector<std::string> ArgumentationGraph::node_ids() const {
  std::vector<std::string> ids{"I"};
  for (const auto& [key, p] : positions) ids.push_back("P:" + key);
  for (size_t i = 0; i < arguments.size(); ++i) ids.push_back("A" + std::to_string(i + 1));
  for (size_t i = 0; i < evidence.size(); ++i) ids.push_back("V" + std::to_string(i + 1));
  return ids;
}

std::vector<Edge> ArgumentationGraph::edges() const {
  std::vector<Edge> out;
  for (const auto& [key, p] : positions) out.push_back({EdgeKind::responds_to, "P:" + key, "I", p.agents});
  for (size_t i = 0; i < arguments.size(); ++i)
    out.push_back({EdgeKind::supports, "A" + std::to_string(i + 1), "P:" + arguments[i].position, arguments[i].agents});
  for (const auto& g : grounds)
    out.push_back({EdgeKind::grounds, "V" + std::to_string(g.evidence + 1), "A" + std::to_string(g.argument + 1), g.agents});
  for (const auto& [e, a] : cause_edges) out.push_back({EdgeKind::cause, "P:" + e.first, "P:" + e.second, a});
  for (const auto& [e, a] : comorbid_links) out.push_back({EdgeKind::comorbid, "P:" + e.first, "P:" + e.second, a});
  std::sort(out.begin(), out.end());
  return out;
}

size_t ArgumentationGraph::resolved_citations(const std::string& position) const {
  size_t n = 0;
  for (const auto& g : grounds)
    if (arguments[g.argument].position == position && evidence[g.evidence].resolved) ++n;
  return n;
}

ArgumentationGraph build_graph(const Issue& issue, const std::vector<IbisTupleSet>& sets,
                               const roster::EvidenceBase& eb) {
  ArgumentationGraph g;
  g.issue = issue;
  for (const auto& set : sets)
    for (const auto& t : set.tuples) {
      auto [it, fresh] = g.positions.try_emplace(t.position.normalized_label);
      if (fresh) it->second.label = t.position.label;
      it->second.agents.insert(set.agent_id);
    }

  std::map<std::pair<std::string, std::string>, size_t> arg_index;
  std::map<std::pair<std::string, std::string>, size_t> ev_index;
  std::map<std::pair<size_t, size_t>, size_t> grounds_index;

  for (const auto& set : sets) {
    const auto& agent = set.agent_id;
    for (const auto& t : set.tuples) {
      const auto& key = t.position.normalized_label;
      auto [ait, afresh] = arg_index.try_emplace({key, t.argument}, g.arguments.size());
      if (afresh) g.arguments.push_back({key, t.argument, {}});
      g.arguments[ait->second].agents.insert(agent);

      for (const auto& ref : t.evidence) {
        auto [eit, efresh] = ev_index.try_emplace({ref.source_text(), ref.excerpt}, g.evidence.size());
        if (efresh) g.evidence.push_back({ref.source_text(), ref.excerpt, resolves(ref, eb), {}});
        g.evidence[eit->second].agents.insert(agent);
        auto [git, gfresh] = grounds_index.try_emplace({eit->second, ait->second}, g.grounds.size());
        if (gfresh) g.grounds.push_back({eit->second, ait->second, {}});
        g.grounds[git->second].agents.insert(agent);
      }

      for (const auto& effect : t.proposed_causes) {
        if (effect == key) {
          g.warnings.push_back({agent, "self-cause on '" + key + "' ignored"});
        } else if (!g.positions.contains(effect)) {
          g.warnings.push_back({agent, "cause target '" + effect + "' of '" + key + "' was not proposed by any agent"});
        } else {
          g.cause_edges[{key, effect}].insert(agent);
        }
      }
      for (const auto& other : t.comorbid_with) {
        if (other == key) {
          g.warnings.push_back({agent, "self-comorbidity on '" + key + "' ignored"});
        } else if (!g.positions.contains(other)) {
          g.warnings.push_back({agent, "comorbid label '" + other + "' of '" + key + "' was not proposed by any agent"});
        } else {
          g.comorbid_links[std::minmax(key, other)].insert(agent);
        }
      }
    }
  }
  return g;
}

json to_json(const ArgumentationGraph& g) {
  auto prov = [](const Provenance& p) { return json(std::vector<std::string>(p.begin(), p.end())); };
  json positions = json::array(), args = json::array(), ev = json::array(), edges = json::array(),
       warnings = json::array();
  for (const auto& [key, p] : g.positions)
    positions.push_back({{"id", "P:" + key}, {"label", p.label}, {"agents", prov(p.agents)}});
  for (size_t i = 0; i < g.arguments.size(); ++i)
    args.push_back({{"id", "A" + std::to_string(i + 1)}, {"text", g.arguments[i].text}, {"agents", prov(g.arguments[i].agents)}});
  for (size_t i = 0; i < g.evidence.size(); ++i)
    ev.push_back({{"id", "V" + std::to_string(i + 1)},
                  {"source", g.evidence[i].source},
                  {"excerpt", g.evidence[i].excerpt},
                  {"resolved", g.evidence[i].resolved},
                  {"agents", prov(g.evidence[i].agents)}});
  for (const auto& e : g.edges())
    edges.push_back({{"kind", edge_kind_name(e.kind)}, {"from", e.from}, {"to", e.to}, {"agents", prov(e.agents)}});
  for (const auto& w : g.warnings) warnings.push_back({{"agent_id", w.agent_id}, {"message", w.message}});
  return {{"issue", {{"id", g.issue.issue_id}, {"statement", g.issue.statement}}},
          {"positions", positions},
          {"arguments", args},
          {"evidence", ev},
          {"edges", edges},
          {"warnings", warnings}};
}

AcyclicityReport validate_acyclic(const std::map<LabelPair, Provenance>& cause_edges) {
  std::set<std::string> label_set;
  for (const auto& [e, a] : cause_edges) {
    label_set.insert(e.first);
    label_set.insert(e.second);
  }
  std::vector<std::string> labels(label_set.begin(), label_set.end());
  auto index_of = [&](const std::string& l) {
    return static_cast<size_t>(std::lower_bound(labels.begin(), labels.end(), l) - labels.begin());
  };
  const size_t n = labels.size();
  std::vector<std::vector<size_t>> adj(n);
  std::vector<size_t> indeg(n, 0);
  for (const auto& [e, a] : cause_edges) {
    adj[index_of(e.first)].push_back(index_of(e.second));
    ++indeg[index_of(e.second)];
  }
  for (auto& v : adj) std::sort(v.begin(), v.end());

  AcyclicityReport report;
  std::queue<size_t> ready;
  for (size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  size_t seen = 0;
  while (!ready.empty()) {
    auto u = ready.front();
    ready.pop();
    ++seen;
    for (auto v : adj[u])
      if (--indeg[v] == 0) ready.push(v);
  }
  report.acyclic = seen == n;
  if (report.acyclic) return report;

  // Elementary cycles, each discovered once from its smallest node so it is already canonically rotated.
  constexpr size_t kStepBudget = 2'000'000;
  size_t steps = 0;
  std::vector<size_t> path;
  std::vector<bool> on_path(n, false);
  std::function<void(size_t, size_t)> dfs = [&](size_t start, size_t u) {
    for (auto v : adj[u]) {
      if (report.truncated) return;
      if (++steps > kStepBudget || report.cycles.size() >= kMaxListedCycles) {
        report.truncated = true;
        return;
      }
      if (v == start) {
        std::vector<std::string> cycle;
        for (auto p : path) cycle.push_back(labels[p]);
        report.cycles.push_back(std::move(cycle));
      } else if (v > start && !on_path[v]) {
        on_path[v] = true;
        path.push_back(v);
        dfs(start, v);
        path.pop_back();
        on_path[v] = false;
      }
    }
  };
  for (size_t s = 0; s < n && !report.truncated; ++s) {
    path = {s};
    on_path.assign(n, false);
    on_path[s] = true;
    dfs(s, s);
  }
  std::sort(report.cycles.begin(), report.cycles.end());
  return report;
}

AcyclicityReport validate_acyclic(const ArgumentationGraph& graph) { return validate_acyclic(graph.cause_edges); }

}  // namespace medcollab::ibis
