#include "medcollab/hdcc.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

#include "medcollab/text.hpp"

namespace medcollab::hdcc {

using nlohmann::json;

namespace {

// Kosaraju; returns the component id of every node.
std::map<std::string, size_t> components(const std::map<LabelPair, Provenance>& edges) {
  std::map<std::string, std::vector<std::string>> fwd, rev;
  std::set<std::string> nodes;
  for (const auto& [e, a] : edges) {
    fwd[e.first].push_back(e.second);
    rev[e.second].push_back(e.first);
    nodes.insert(e.first);
    nodes.insert(e.second);
  }
  std::vector<std::string> order;
  std::set<std::string> seen;
  std::function<void(const std::string&)> visit = [&](const std::string& u) {
    if (!seen.insert(u).second) return;
    for (const auto& v : fwd[u]) visit(v);
    order.push_back(u);
  };
  for (const auto& n : nodes) visit(n);

  std::map<std::string, size_t> comp;
  std::function<void(const std::string&, size_t)> assign = [&](const std::string& u, size_t c) {
    if (comp.contains(u)) return;
    comp[u] = c;
    for (const auto& v : rev[u]) assign(v, c);
  };
  size_t next = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!comp.contains(*it)) assign(*it, next++);
  return comp;
}

}  // namespace

std::vector<RemovedEdge> resolve_cycles(std::map<LabelPair, Provenance>& cause_edges) {
  std::vector<RemovedEdge> log;
  while (true) {
    auto comp = components(cause_edges);
    const std::pair<const LabelPair, Provenance>* victim = nullptr;
    for (const auto& entry : cause_edges) {
      const auto& [e, a] = entry;
      if (comp[e.first] != comp[e.second]) continue;
      if (!victim || a.size() < victim->second.size()) victim = &entry;
      // map iteration is already in ascending (from, to) order, so ties keep the first seen
    }
    if (!victim) return log;
    log.push_back({victim->first.first, victim->first.second, victim->second});
    cause_edges.erase(victim->first);
  }
}

CausalDag assemble_hdcc(const ibis::ArgumentationGraph& graph) {
  CausalDag dag;
  for (const auto& [key, p] : graph.positions) dag.positions[key] = {p.label, p.agents, graph.resolved_citations(key)};
  dag.cause_edges = graph.cause_edges;
  dag.comorbid_links = graph.comorbid_links;
  dag.removed = resolve_cycles(dag.cause_edges);
  return dag;
}

std::string ChainStage::key() const { return text::join(positions, " + "); }

std::vector<std::string> CausalChain::all_positions() const {
  std::vector<std::string> out;
  for (const auto& s : stages) out.insert(out.end(), s.positions.begin(), s.positions.end());
  return out;
}

std::vector<ChainStage> fold_stages(const CausalDag& dag) {
  std::map<std::string, std::set<std::string>> preds, succs;
  for (const auto& [e, a] : dag.cause_edges) {
    succs[e.first].insert(e.second);
    preds[e.second].insert(e.first);
  }
  std::map<std::string, std::string> parent;
  for (const auto& [key, p] : dag.positions) parent[key] = key;
  std::function<std::string(const std::string&)> find = [&](const std::string& x) {
    auto& p = parent[x];
    if (p != x) p = find(p);
    return p;
  };
  for (const auto& [link, a] : dag.comorbid_links) {
    const auto& [u, v] = link;
    if (!dag.positions.contains(u) || !dag.positions.contains(v)) continue;
    if (preds[u] != preds[v] || succs[u] != succs[v]) continue;
    auto ru = find(u), rv = find(v);
    if (ru != rv) parent[std::max(ru, rv)] = std::min(ru, rv);
  }
  std::map<std::string, ChainStage> groups;
  for (const auto& [key, p] : dag.positions) groups[find(key)].positions.push_back(key);
  std::vector<ChainStage> stages;
  for (auto& [root, s] : groups) {
    std::sort(s.positions.begin(), s.positions.end());
    stages.push_back(std::move(s));
  }
  std::sort(stages.begin(), stages.end(), [](const ChainStage& a, const ChainStage& b) { return a.key() < b.key(); });
  return stages;
}

namespace {

CausalChain make_chain(std::vector<ChainStage> stages, const CausalDag& dag) {
  CausalChain c;
  c.stages = std::move(stages);
  for (const auto& s : c.stages)
    for (const auto& p : s.positions) {
      const auto& node = dag.positions.at(p);
      c.supporters.insert(node.agents.begin(), node.agents.end());
      c.resolved_citations += node.resolved_citations;
    }
  for (size_t t = 0; t + 1 < c.stages.size(); ++t)
    for (const auto& u : c.stages[t].positions)
      for (const auto& v : c.stages[t + 1].positions)
        if (auto it = dag.cause_edges.find({u, v}); it != dag.cause_edges.end())
          c.supporters.insert(it->second.begin(), it->second.end());
  return c;
}

}  // namespace

ChainSet enumerate_chains(const CausalDag& dag, size_t cap) {
  const auto stages = fold_stages(dag);
  const size_t n = stages.size();
  std::map<std::string, size_t> stage_of;
  for (size_t i = 0; i < n; ++i)
    for (const auto& p : stages[i].positions) stage_of[p] = i;

  std::vector<std::set<size_t>> children(n);
  std::vector<size_t> indeg(n, 0);
  for (const auto& [e, a] : dag.cause_edges) {
    auto u = stage_of.at(e.first), v = stage_of.at(e.second);
    if (children[u].insert(v).second) ++indeg[v];
  }

  // reach[s][len]: some path of exactly `len` stages runs from s to a sink
  std::vector<size_t> topo;
  {
    std::vector<size_t> deg = indeg, ready;
    for (size_t i = 0; i < n; ++i)
      if (deg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
      auto u = ready.back();
      ready.pop_back();
      topo.push_back(u);
      for (auto v : children[u])
        if (--deg[v] == 0) ready.push_back(v);
    }
    if (topo.size() != n) throw PreconditionError("enumerate_chains: causal graph is not acyclic");
  }
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n + 1, false));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    auto u = *it;
    if (children[u].empty()) {
      reach[u][1] = true;
      continue;
    }
    for (auto v : children[u])
      for (size_t len = 1; len < n; ++len)
        if (reach[v][len]) reach[u][len + 1] = true;
  }

  ChainSet out;
  std::vector<size_t> path;
  std::function<bool(size_t, size_t)> walk = [&](size_t u, size_t remaining) {
    path.push_back(u);
    if (remaining == 1) {
      if (out.chains.size() == cap) {
        out.overflow = true;
        path.pop_back();
        return false;
      }
      std::vector<ChainStage> chain_stages;
      for (auto s : path) chain_stages.push_back(stages[s]);
      out.chains.push_back(make_chain(std::move(chain_stages), dag));
    } else {
      for (auto v : children[u])
        if (reach[v][remaining - 1] && !walk(v, remaining - 1)) {
          path.pop_back();
          return false;
        }
    }
    path.pop_back();
    return true;
  };

  bool more = true;
  for (size_t len = n; len >= 1 && more; --len)
    for (size_t s = 0; s < n && more; ++s)
      if (indeg[s] == 0 && reach[s][len]) more = walk(s, len);

  for (size_t i = 0; i < out.chains.size(); ++i) out.chains[i].chain_id = "C" + std::to_string(i + 1);
  return out;
}

ChainSet singleton_chains(const CausalDag& dag, size_t cap) {
  ChainSet out;
  for (const auto& [key, p] : dag.positions) {
    if (out.chains.size() == cap) {
      out.overflow = true;
      break;
    }
    CausalChain c;
    c.stages.push_back({{key}});
    c.supporters = p.agents;
    c.resolved_citations = p.resolved_citations;
    c.chain_id = "C" + std::to_string(out.chains.size() + 1);
    out.chains.push_back(std::move(c));
  }
  return out;
}

void HdccParams::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tau must lie in [0, 1]");
}

ChainScore score_chain(const CausalChain& chain, const std::map<std::string, double>& weights,
                       const std::map<std::string, double>& logic, const HdccParams& params) {
  ChainScore s;
  s.chain_id = chain.chain_id;
  for (const auto& agent : chain.supporters) {
    auto w = weights.find(agent);
    if (w == weights.end()) throw ScoringError("no weight for supporter '" + agent + "'");
    auto l = logic.find(agent);
    if (l == logic.end()) throw ScoringError("no logic score for supporter '" + agent + "'");
    if (l->second > params.tau) {
      s.score += w->second;
      s.contributing_agents.emplace_back(agent, w->second);
    }
  }
  return s;
}

std::vector<RankedChain> rank_chains(const std::vector<ChainScore>& scores, const std::vector<CausalChain>& chains) {
  std::map<std::string, const ChainScore*> by_id;
  for (const auto& s : scores) by_id[s.chain_id] = &s;
  std::vector<RankedChain> ranked;
  for (const auto& c : chains) {
    auto it = by_id.find(c.chain_id);
    if (it == by_id.end()) throw PreconditionError("rank_chains: no score for chain '" + c.chain_id + "'");
    ranked.push_back({&c, *it->second});
  }
  auto labels = [](const CausalChain& c) {
    std::vector<std::string> keys;
    for (const auto& s : c.stages) keys.push_back(s.key());
    return keys;
  };
  std::stable_sort(ranked.begin(), ranked.end(), [&](const RankedChain& a, const RankedChain& b) {
    if (a.score.score != b.score.score) return a.score.score > b.score.score;
    if (a.chain->resolved_citations != b.chain->resolved_citations)
      return a.chain->resolved_citations > b.chain->resolved_citations;
    if (a.chain->length() != b.chain->length()) return a.chain->length() > b.chain->length();
    auto la = labels(*a.chain), lb = labels(*b.chain);
    if (la != lb) return la < lb;
    return a.chain->chain_id < b.chain->chain_id;
  });
  return ranked;
}

std::string render_chain(const CausalChain& chain, const std::map<std::string, DagPosition>& positions) {
  std::vector<std::string> stages;
  for (const auto& s : chain.stages) {
    std::vector<std::string> members;
    for (const auto& p : s.positions) {
      auto it = positions.find(p);
      members.push_back(it == positions.end() ? p : it->second.label);
    }
    stages.push_back(text::join(members, " + "));
  }
  return text::join(stages, " → ");
}

json to_json(const CausalChain& c) {
  json stages = json::array();
  for (const auto& s : c.stages) stages.push_back(s.positions);
  return {{"chain_id", c.chain_id},
          {"stages", stages},
          {"length", c.length()},
          {"supporters", std::vector<std::string>(c.supporters.begin(), c.supporters.end())},
          {"resolved_citations", c.resolved_citations}};
}

json to_json(const ChainScore& s) {
  json contrib = json::array();
  for (const auto& [a, w] : s.contributing_agents) contrib.push_back({{"agent_id", a}, {"weight", w}});
  return {{"chain_id", s.chain_id}, {"score", s.score}, {"contributing_agents", contrib}};
}

json to_json(const CausalDag& dag) {
  auto prov = [](const Provenance& p) { return json(std::vector<std::string>(p.begin(), p.end())); };
  json edges = json::array(), links = json::array(), removed = json::array();
  for (const auto& [e, a] : dag.cause_edges) edges.push_back({{"from", e.first}, {"to", e.second}, {"agents", prov(a)}});
  for (const auto& [e, a] : dag.comorbid_links) links.push_back({{"a", e.first}, {"b", e.second}, {"agents", prov(a)}});
  for (const auto& r : dag.removed) removed.push_back({{"from", r.from}, {"to", r.to}, {"agents", prov(r.agents)}});
  return {{"cause_edges", edges}, {"comorbid_links", links}, {"removed", removed}};
}

}  // namespace medcollab::hdcc
