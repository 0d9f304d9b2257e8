#include "medcollab/commands.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "medcollab/pipeline.hpp"
#include "medcollab/text.hpp"
#include "medcollab/transcript.hpp"

namespace medcollab::commands {

using nlohmann::json;

void RunConfig::validate() const {
  for (const auto& [flag, p] : {std::pair<const char*, const fs::path*>{"--dataset", &dataset},
                                {"--roster", &roster},
                                {"--taxonomy", &taxonomy},
                                {"--synonyms", &synonyms},
                                {"--gateway", &gateway}})
    if (p->empty() || !fs::exists(*p)) throw ValidationError(std::string(flag) + ": path '" + p->string() + "' does not exist");
  if (mode == gateway::Mode::replay && !fs::exists(store_path()))
    throw ValidationError("--store: replay store '" + store_path().string() + "' does not exist");
  if (jobs < 1) throw ValidationError("--jobs must be >= 1");
  consensus.validate();
}

std::string case_file_stem(const std::string& case_id) {
  std::string out;
  for (char c : case_id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  if (out.empty() || out[0] == '.') out = "_" + out;
  return out;
}

namespace {

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
}

std::unique_ptr<transcript::Clock> make_clock(const RunConfig& config) {
  bool logical = config.clock == ClockKind::logical ||
                 (config.clock == ClockKind::automatic && config.mode == gateway::Mode::replay);
  if (logical) return std::make_unique<transcript::LogicalClock>();
  return std::make_unique<transcript::WallClock>();
}

struct Loaded {
  DepartmentTaxonomy taxonomy;
  std::vector<ClinicalCase> cases;
  roster::Roster roster;
  eval::SynonymTable synonyms;
};

Loaded load_inputs(const RunConfig& config, gateway::Gateway& gw) {
  auto taxonomy = DepartmentTaxonomy::load(config.taxonomy);
  auto cases = load_dataset(config.dataset, taxonomy);
  auto roster = roster::Roster::load(config.roster, taxonomy);
  auto synonyms = eval::SynonymTable::load(config.synonyms);
  for (const auto& a : roster.agents())
    if (!gw.has_backend(a.backend))
      throw ValidationError("agent '" + a.agent_id + "' names unknown backend '" + a.backend + "'");
  return {std::move(taxonomy), std::move(cases), std::move(roster), std::move(synonyms)};
}

}  // namespace

int cmd_run(const RunConfig& config, std::ostream& log) {
  std::optional<Loaded> in;
  std::unique_ptr<gateway::ReplayStore> store;
  std::unique_ptr<gateway::Gateway> gw;
  try {
    config.validate();
    fs::create_directories(config.out / "transcripts");
    fs::create_directories(config.out / "reports");
    store = std::make_unique<gateway::ReplayStore>(config.mode, config.store_path());
    gw = std::make_unique<gateway::Gateway>(gateway::load_gateway(config.gateway, *store));
    in.emplace(load_inputs(config, *gw));
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  const auto& cases = in->cases;
  std::vector<pipeline::CaseResult> results(cases.size());
  std::atomic<size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (size_t i = next++; i < cases.size(); i = next++) {
      const auto& c = cases[i];
      const auto stem = case_file_stem(c.case_id);
      auto clock = make_clock(config);
      try {
        transcript::Writer writer(config.out / "transcripts" / (stem + ".jsonl"), *clock);
        results[i] = pipeline::run_case(c, {in->roster, in->synonyms, *gw, config.consensus}, writer);
        if (results[i].ok) write_file(config.out / "reports" / (stem + ".json"), pipeline::report_document(results[i]).dump(2) + "\n");
      } catch (const std::exception& e) {
        results[i].case_id = c.case_id;
        results[i].ok = false;
        results[i].error = e.what();
        results[i].error_kind = "other";
      }
      std::lock_guard lock(log_mu);
      if (results[i].ok)
        log << "case " << c.case_id << ": " << results[i].report->diagnosis_chain << " ("
            << (results[i].outcome->converged ? "converged" : "round cap") << " after " << results[i].outcome->rounds_used
            << " round(s))\n";
      else
        log << "case " << c.case_id << ": FAILED: " << results[i].error << "\n";
    }
  };
  std::vector<std::thread> pool;
  const auto workers = std::min<size_t>(static_cast<size_t>(config.jobs), std::max<size_t>(cases.size(), 1));
  for (size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  json summary = json::array();
  size_t failed = 0;
  for (const auto& r : results) {
    summary.push_back({{"case_id", r.case_id}, {"status", r.ok ? "ok" : "failed"}, {"error", r.error}});
    failed += r.ok ? 0 : 1;
  }
  try {
    write_file(config.out / "run_summary.json", json{{"cases", summary}}.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  log << cases.size() - failed << "/" << cases.size() << " case(s) completed\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_eval(const EvalConfig& config, std::ostream& log) {
  try {
    auto taxonomy = DepartmentTaxonomy::load(config.taxonomy);
    auto gold = load_dataset(config.gold, taxonomy);
    auto synonyms = eval::SynonymTable::load(config.synonyms);

    std::vector<eval::CasePrediction> predictions;
    const auto reports_dir = config.run_dir / "reports";
    if (!fs::is_directory(reports_dir)) throw ValidationError("no reports directory in " + config.run_dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(reports_dir))
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto j = read_json_file(f);
      eval::CasePrediction p;
      try {
        p.case_id = j.at("case_id").get<std::string>();
        p.department = j.at("department").get<std::string>();
        p.primary_diagnosis = j.at("primary_diagnosis").get<std::string>();
        p.diagnoses = j.value("diagnoses", std::vector<std::string>{});
        const auto sections = j.value("sections", json::object());
        for (const auto& [k, v] : sections.items())
          if (auto s = parse_section(k)) p.sections[*s] = v.get<std::string>();
      } catch (const json::exception& e) {
        throw ParseError(f.string() + ": " + e.what());
      }
      predictions.push_back(std::move(p));
    }

    std::set<std::string> predicted_ids;
    for (const auto& p : predictions) predicted_ids.insert(p.case_id);
    bool overlap = false;
    for (const auto& g : gold) {
      if (predicted_ids.contains(g.case_id)) overlap = true;
      else log << "warning: gold case " << g.case_id << " has no report; skipped\n";
    }
    if (!overlap) throw eval::CaseMismatchError("no case ids in common between reports and gold dataset");

    auto report = eval::evaluate(predictions, gold, synonyms, taxonomy, {config.diagnosis_rule, {}});
    const auto out_dir = config.out ? *config.out : config.run_dir;
    fs::create_directories(out_dir);
    write_file(out_dir / "metrics.json", eval::to_json(report).dump(2) + "\n");
    write_file(out_dir / "metrics_per_case.csv", eval::per_case_csv(report));
    log << eval::to_json(report).dump(2) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

namespace {

std::string agents_text(const json& agents) {
  std::vector<std::string> a;
  for (const auto& x : agents) a.push_back(x.get<std::string>());
  return "[" + text::join(a, ", ") + "]";
}

void render_audit(const std::vector<transcript::Event>& events, std::ostream& out) {
  const json* last_graph = nullptr;
  int last_round = 0;
  for (const auto& e : events) {
    if (e.type == "header") out << "Case: " << e.data.value("case_id", std::string("?")) << "\n";
    if (e.type == "recruitment") {
      out << "Recruited specialists: " << agents_text(e.data.value("specialists", json::array()))
          << "; examiners: " << agents_text(e.data.value("examiners", json::array()))
          << "; case domains: " << agents_text(e.data.value("case_domains", json::array())) << "\n";
    }
    if (e.type == "round") {
      last_graph = &e.data.at("graph");
      last_round = e.data.value("round", 0);
      out << "\nRound " << last_round << "\n  weights:";
      for (const auto& [a, w] : e.data.at("weights").at("weights").items()) out << " " << a << "=" << w.dump();
      out << "\n";
      if (e.data.contains("gated") && !e.data.at("gated").empty())
        out << "  gated out: " << agents_text(e.data.at("gated")) << "\n";
      for (const auto& a : e.data.value("audits", json::array()))
        out << "  audit " << a.at("agent_id").get<std::string>() << ": logic=" << a.at("logic_score").dump()
            << " sigma=" << a.at("sigma").dump() << " violations=" << a.at("violations").size() << "\n";
      const auto& ranking = e.data.at("ranking");
      const auto& rendered = e.data.at("rendered");
      std::map<std::string, double> score_of;
      for (const auto& s : e.data.at("scores")) score_of[s.at("chain_id").get<std::string>()] = s.at("score").get<double>();
      for (size_t i = 0; i < ranking.size(); ++i)
        out << "  chain " << ranking[i].get<std::string>() << " score=" << json(score_of[ranking[i].get<std::string>()]).dump()
            << "  " << rendered[i].get<std::string>() << "\n";
      const auto& m = e.data.at("majority");
      out << "  majority: " << (m.at("reached").get<bool>() ? "reached" : "not reached")
          << " (top " << m.at("top_score").dump() << " vs threshold " << m.at("threshold").dump() << ")\n";
      if (!e.data.at("updated_weights").is_null()) {
        out << "  updated weights:";
        for (const auto& [a, w] : e.data.at("updated_weights").at("weights").items()) out << " " << a << "=" << w.dump();
        out << "\n";
      }
    }
    if (e.type == "final_report")
      out << "\nFinal diagnosis chain: " << e.data.value("diagnosis_chain", std::string()) << "\nDepartment: "
          << e.data.value("department", std::string()) << "\n";
    if (e.type == "case_failed") out << "\nCase failed: " << e.data.value("error", std::string()) << "\n";
  }
  if (last_graph) {
    out << "\nArgumentation graph (round " << last_round << ")\n  nodes:\n    I  " << (*last_graph).at("issue").at("statement").get<std::string>() << "\n";
    for (const auto& p : (*last_graph).at("positions"))
      out << "    " << p.at("id").get<std::string>() << "  " << p.at("label").get<std::string>() << " " << agents_text(p.at("agents")) << "\n";
    for (const auto& a : (*last_graph).at("arguments"))
      out << "    " << a.at("id").get<std::string>() << "  " << a.at("text").get<std::string>() << " " << agents_text(a.at("agents")) << "\n";
    for (const auto& v : (*last_graph).at("evidence"))
      out << "    " << v.at("id").get<std::string>() << "  " << v.at("source").get<std::string>()
          << (v.at("resolved").get<bool>() ? " (resolved)" : " (UNRESOLVED)") << " " << agents_text(v.at("agents")) << "\n";
    out << "  edges:\n";
    for (const auto& ed : (*last_graph).at("edges"))
      out << "    " << ed.at("kind").get<std::string>() << "  " << ed.at("from").get<std::string>() << " -> "
          << ed.at("to").get<std::string>() << " " << agents_text(ed.at("agents")) << "\n";
    for (const auto& w : (*last_graph).at("warnings"))
      out << "  warning (" << w.at("agent_id").get<std::string>() << "): " << w.at("message").get<std::string>() << "\n";
  }
}

}  // namespace

int cmd_audit(const fs::path& path, std::ostream& out) {
  std::string contents;
  try {
    contents = read_file(path);
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  auto v = transcript::verify(contents);
  if (v.ok) {
    try {
      render_audit(transcript::parse(contents), out);
    } catch (const std::exception& e) {
      out << "error: unreadable transcript content: " << e.what() << "\n";
      return kExitFailure;
    }
    out << "\nchain verified (" << v.events << " events)\n";
    return kExitOk;
  }
  out << "verification FAILED at event " << v.failed_index << ": " << v.reason << "\n";
  return kExitFailure;
}

int cmd_replay(const fs::path& path, const RunConfig& base, std::ostream& out) {
  try {
    auto original = transcript::parse(read_file(path));
    if (original.empty() || original.front().type != "header") throw ParseError("transcript has no header");
    const auto& header = original.front().data;
    const auto case_id = header.at("case_id").get<std::string>();

    RunConfig config = base;
    config.mode = gateway::Mode::replay;
    config.consensus = consensus::consensus_config_from_json(header.at("consensus"));
    config.validate();

    gateway::ReplayStore store(gateway::Mode::replay, config.store_path());
    auto gw = gateway::load_gateway(config.gateway, store);
    auto in = load_inputs(config, gw);
    const ClinicalCase* target = nullptr;
    for (const auto& c : in.cases)
      if (c.case_id == case_id) target = &c;
    if (!target) throw ValidationError("case '" + case_id + "' not found in dataset");

    transcript::LogicalClock clock;
    transcript::Writer writer(std::nullopt, clock);
    auto result = pipeline::run_case(*target, {in.roster, in.synonyms, gw, config.consensus}, writer);
    auto rerun = transcript::parse(writer.contents());

    const size_t n = std::max(original.size(), rerun.size());
    for (size_t i = 1; i < n; ++i) {
      if (i >= original.size() || i >= rerun.size() || original[i].type != rerun[i].type ||
          original[i].data.dump() != rerun[i].data.dump()) {
        std::string what = i < original.size() ? original[i].type : "<end>";
        std::string got = i < rerun.size() ? rerun[i].type : "<end>";
        if (i < original.size() && original[i].type == "round") what += " " + original[i].data["round"].dump();
        if (i < rerun.size() && rerun[i].type == "round") got += " " + rerun[i].data["round"].dump();
        out << "divergence at event " << i << ": recorded " << what << ", replayed " << got << "\n";
        if (result.replay_miss_digest) out << "replay miss: no recorded reply for digest " << *result.replay_miss_digest << "\n";
        return kExitFailure;
      }
    }
    out << "replay identical (" << original.size() << " events)\n";
    return kExitOk;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace medcollab::commands
