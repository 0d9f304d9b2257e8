// medcollab: run, evaluate, audit and replay multi-agent diagnostic consultations.
#include <CLI11.hpp>

#include <iostream>

#include "medcollab/commands.hpp"
#include "medcollab/error.hpp"

namespace mc = medcollab;
using mc::commands::RunConfig;

namespace {

struct Flags {
  std::string mode = "live";
  std::string auditor = "rule";
  std::string clock = "auto";
  std::string store;
  bool no_logic_audit = false;
  bool no_causal_chain = false;
};

void add_run_flags(CLI::App* app, RunConfig& cfg, Flags& f, bool require_inputs) {
  auto* d = app->add_option("--dataset", cfg.dataset, "case dataset (JSON)");
  auto* r = app->add_option("--roster", cfg.roster, "agent roster (JSON)");
  auto* t = app->add_option("--taxonomy", cfg.taxonomy, "department and modality taxonomy (JSON)");
  auto* s = app->add_option("--synonyms", cfg.synonyms, "diagnosis synonym table (JSON)");
  auto* g = app->add_option("--gateway", cfg.gateway, "backend configuration (JSON)");
  if (require_inputs)
    for (auto* o : {d, r, t, s, g}) o->required();
  app->add_option("--lambda", cfg.consensus.lambda, "weight penalty coefficient")->capture_default_str();
  app->add_option("--tau", cfg.consensus.tau, "logic threshold for chain scoring")->capture_default_str();
  app->add_option("--theta", cfg.consensus.majority_fraction, "majority fraction of total weight")->capture_default_str();
  app->add_option("--max-rounds", cfg.consensus.max_rounds, "round cap")->capture_default_str();
  app->add_option("--auditor", f.auditor, "logic auditor")->check(CLI::IsMember({"rule", "gp"}))->capture_default_str();
  app->add_option("--mode", f.mode, "backend mode")->check(CLI::IsMember({"live", "record", "replay"}))->capture_default_str();
  app->add_option("--store", f.store, "replay store (default <out>/replay.jsonl)");
  app->add_option("--clock", f.clock, "transcript timestamps")->check(CLI::IsMember({"auto", "wall", "logical"}))->capture_default_str();
  app->add_flag("--no-logic-audit", f.no_logic_audit, "disable logic auditing (Logic := 1, weights frozen)");
  app->add_flag("--no-causal-chain", f.no_causal_chain, "score single positions instead of causal chains");
  app->add_option("--out", cfg.out, "output directory")->capture_default_str();
  app->add_option("--jobs", cfg.jobs, "parallel cases")->check(CLI::PositiveNumber)->capture_default_str();
}

void apply(RunConfig& cfg, const Flags& f) {
  cfg.mode = mc::gateway::parse_mode(f.mode);
  cfg.consensus.auditor = f.auditor == "gp" ? mc::consensus::Auditor::gp_model : mc::consensus::Auditor::rule_based;
  cfg.consensus.logic_auditing_enabled = !f.no_logic_audit;
  cfg.consensus.causal_chain_enabled = !f.no_causal_chain;
  cfg.clock = f.clock == "wall" ? mc::commands::ClockKind::wall
            : f.clock == "logical" ? mc::commands::ClockKind::logical
                                   : mc::commands::ClockKind::automatic;
  if (!f.store.empty()) cfg.store = f.store;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent diagnostic consultation engine"};
  app.require_subcommand(1);

  RunConfig run_cfg;
  Flags run_flags;
  auto* run = app.add_subcommand("run", "run every case in a dataset");
  add_run_flags(run, run_cfg, run_flags, true);

  mc::commands::EvalConfig eval_cfg;
  std::string rule = "full";
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "score a run directory against gold annotations");
  eval->add_option("run_dir", eval_cfg.run_dir, "output directory of a previous run")->required();
  eval->add_option("--dataset,--gold", eval_cfg.gold, "gold dataset")->required();
  eval->add_option("--synonyms", eval_cfg.synonyms, "diagnosis synonym table")->required();
  eval->add_option("--taxonomy", eval_cfg.taxonomy, "department taxonomy")->required();
  eval->add_option("--diagnosis-rule", rule, "ACC/CDR match rule")->check(CLI::IsMember({"full", "primary"}))->capture_default_str();
  eval->add_option("--out", eval_out, "metrics directory (default run_dir)");

  std::string audit_path;
  auto* audit = app.add_subcommand("audit", "verify and render a case transcript");
  audit->add_option("transcript", audit_path)->required();

  std::string replay_path;
  RunConfig replay_cfg;
  Flags replay_flags;
  replay_flags.mode = "replay";
  auto* replay = app.add_subcommand("replay", "re-execute a transcript's case from the replay store");
  replay->add_option("transcript", replay_path)->required();
  add_run_flags(replay, replay_cfg, replay_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : mc::commands::kExitUsage;
  }

  try {
    if (*run) {
      apply(run_cfg, run_flags);
      return mc::commands::cmd_run(run_cfg, std::cerr);
    }
    if (*eval) {
      eval_cfg.diagnosis_rule = rule == "primary" ? mc::eval::DiagnosisRule::primary_only : mc::eval::DiagnosisRule::full_set;
      if (!eval_out.empty()) eval_cfg.out = eval_out;
      return mc::commands::cmd_eval(eval_cfg, std::cout);
    }
    if (*audit) return mc::commands::cmd_audit(audit_path, std::cout);
    if (*replay) {
      apply(replay_cfg, replay_flags);
      return mc::commands::cmd_replay(replay_path, replay_cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mc::commands::kExitUsage;
  }
  return mc::commands::kExitUsage;
}
