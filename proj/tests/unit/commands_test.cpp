#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "medcollab/casefile.hpp"
#include "medcollab/commands.hpp"
#include "medcollab/transcript.hpp"

using namespace medcollab;
using namespace medcollab::commands;
using nlohmann::json;

namespace {

const fs::path kWorld = fs::path(MEDCOLLAB_FIXTURES) / "world";

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("medcollab_cmd_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig world_config(const fs::path& out, gateway::Mode mode = gateway::Mode::live) {
  RunConfig c;
  c.dataset = kWorld / "dataset.json";
  c.roster = kWorld / "roster.json";
  c.taxonomy = kWorld / "taxonomy.json";
  c.synonyms = kWorld / "synonyms.json";
  c.gateway = kWorld / "gateway.json";
  c.out = out;
  c.mode = mode;
  c.clock = ClockKind::logical;
  return c;
}

}  // namespace

TEST(Commands, FileStem) {
  EXPECT_EQ(case_file_stem("trauma-001"), "trauma-001");
  EXPECT_EQ(case_file_stem("a/b c"), "a_b_c");
}

TEST(Commands, RunWritesReportsAndTranscripts) {
  auto out = scratch("run");
  std::ostringstream log;
  ASSERT_EQ(cmd_run(world_config(out), log), kExitOk) << log.str();
  for (const char* id : {"trauma-001", "pneumonia-002"}) {
    EXPECT_TRUE(fs::exists(out / "reports" / (std::string(id) + ".json")));
    auto t = out / "transcripts" / (std::string(id) + ".jsonl");
    ASSERT_TRUE(fs::exists(t));
    EXPECT_TRUE(transcript::verify_file(t).ok);
  }
  auto report = read_json_file(out / "reports" / "trauma-001.json");
  EXPECT_EQ(report.at("department"), "Orthopedics");
  EXPECT_NE(log.str().find("case trauma-001: Trauma → Rib Fracture → Lung Hemorrhage → Anemia (converged after 1 round(s))"), std::string::npos);
  fs::remove_all(out);
}

TEST(Commands, MissingInputIsUsageError) {
  auto out = scratch("missing");
  auto c = world_config(out);
  c.dataset = kWorld / "nope.json";
  std::ostringstream log;
  EXPECT_EQ(cmd_run(c, log), kExitUsage);
  c = world_config(out);
  c.consensus.majority_fraction = 0.2;
  EXPECT_EQ(cmd_run(c, log), kExitUsage);
  c = world_config(out, gateway::Mode::replay);
  EXPECT_EQ(cmd_run(c, log), kExitUsage);
}

TEST(Commands, RecordReplayEvalAudit) {
  auto rec = scratch("rec");
  auto rep = scratch("rep");
  std::ostringstream log;
  auto rc = world_config(rec, gateway::Mode::record);
  ASSERT_EQ(cmd_run(rc, log), kExitOk) << log.str();

  auto pc = world_config(rep, gateway::Mode::replay);
  pc.store = rec / "replay.jsonl";
  ASSERT_EQ(cmd_run(pc, log), kExitOk) << log.str();
  EXPECT_EQ(read_file(rec / "transcripts" / "trauma-001.jsonl"), read_file(rep / "transcripts" / "trauma-001.jsonl"));

  std::ostringstream out;
  EXPECT_EQ(cmd_replay(rec / "transcripts" / "pneumonia-002.jsonl", pc, out), kExitOk) << out.str();
  EXPECT_NE(out.str().find("replay identical"), std::string::npos);

  out.str("");
  EXPECT_EQ(cmd_audit(rec / "transcripts" / "trauma-001.jsonl", out), kExitOk);
  EXPECT_NE(out.str().find("chain verified"), std::string::npos);
  EXPECT_NE(out.str().find("Trauma"), std::string::npos);

  EvalConfig ec{rec, kWorld / "dataset.json", kWorld / "synonyms.json", kWorld / "taxonomy.json", std::nullopt,
                eval::DiagnosisRule::full_set};
  out.str("");
  ASSERT_EQ(cmd_eval(ec, out), kExitOk) << out.str();
  auto metrics = read_json_file(rec / "metrics.json");
  EXPECT_DOUBLE_EQ(metrics.at("acc").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(metrics.at("dca").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(rec / "metrics_per_case.csv"));

  fs::remove_all(rec);
  fs::remove_all(rep);
}

TEST(Commands, AuditFlagsTamperedTranscript) {
  auto out_dir = scratch("tamper");
  std::ostringstream log;
  ASSERT_EQ(cmd_run(world_config(out_dir), log), kExitOk);
  auto t = out_dir / "transcripts" / "trauma-001.jsonl";
  auto body = read_file(t);
  auto pos = body.find("Orthopedics");
  ASSERT_NE(pos, std::string::npos);
  body[pos] = 'X';
  { std::ofstream(t, std::ios::binary | std::ios::trunc) << body; }
  std::ostringstream out;
  EXPECT_EQ(cmd_audit(t, out), kExitFailure);
  EXPECT_NE(out.str().find("verification FAILED at event"), std::string::npos);
  EXPECT_EQ(cmd_audit(out_dir / "absent.jsonl", out), kExitUsage);
  fs::remove_all(out_dir);
}
