#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "medcollab/consensus.hpp"
#include "medcollab/evalharness.hpp"
#include "medcollab/gateway.hpp"

namespace medcollab::commands {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

enum class ClockKind { automatic, wall, logical };

struct RunConfig {
  fs::path dataset;
  fs::path roster;
  fs::path taxonomy;
  fs::path synonyms;
  fs::path gateway;
  std::optional<fs::path> store;  // defaults to <out>/replay.jsonl
  fs::path out = "medcollab-out";
  consensus::ConsensusConfig consensus;
  gateway::Mode mode = gateway::Mode::live;
  ClockKind clock = ClockKind::automatic;  // logical in replay mode, wall clock otherwise
  int jobs = 1;

  /// Throws ValidationError naming the first missing path or out-of-range parameter.
  void validate() const;
  fs::path store_path() const { return store ? *store : out / "replay.jsonl"; }
};

/// File name used for a case's transcript and report (unsafe characters replaced).
std::string case_file_stem(const std::string& case_id);

int cmd_run(const RunConfig& config, std::ostream& log);

struct EvalConfig {
  fs::path run_dir;
  fs::path gold;
  fs::path synonyms;
  fs::path taxonomy;
  std::optional<fs::path> out;  // defaults to run_dir
  eval::DiagnosisRule diagnosis_rule = eval::DiagnosisRule::full_set;
};

int cmd_eval(const EvalConfig& config, std::ostream& log);

int cmd_audit(const fs::path& transcript, std::ostream& out);

/// Re-executes the transcript's case from the replay store and compares every event after the header.
int cmd_replay(const fs::path& transcript, const RunConfig& config, std::ostream& out);

}  // namespace medcollab::commands
