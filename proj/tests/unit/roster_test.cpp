#include <gtest/gtest.h>

#include "medcollab/roster.hpp"

using namespace medcollab;
using namespace medcollab::roster;
using nlohmann::json;

namespace {

DepartmentTaxonomy taxonomy() {
  return {{"Orthopedics", "Respiratory", "Cardiology", "Hematology"}, {"imaging", "lab", "pathology"}};
}

std::vector<AgentSpec> agents() {
  return {{"gp", Role::gp, {}, "gp"},
          {"ortho", Role::specialist, {"Orthopedics"}, "spec"},
          {"resp", Role::specialist, {"Respiratory"}, "spec"},
          {"cardio", Role::specialist, {"Cardiology"}, "spec"},
          {"radiology", Role::examiner, {"imaging"}, "exam"},
          {"pathology", Role::examiner, {"pathology"}, "exam"}};
}

ClinicalCase fall_case() {
  ClinicalCase c;
  c.case_id = "c1";
  c.chief_complaint = "Chest pain after a fall";
  c.medical_history = "No prior illness";
  c.raw_findings = {{"F1", "imaging", "CT: fractured left 6th rib"}, {"F2", "lab", "Hb 11"}};
  return c;
}

struct Harness {
  explicit Harness(std::function<std::string(const gateway::Prompt&)> gp,
                   std::function<std::string(const gateway::Prompt&)> exam = {})
      : store(gateway::Mode::live) {
    std::map<std::string, gateway::BackendConfig> b;
    auto mk = [&](const std::string& name, std::function<std::string(const gateway::Prompt&)> fn) {
      gateway::BackendConfig c;
      c.name = name;
      c.kind = gateway::BackendKind::in_process;
      c.retry.max_attempts = 1;
      c.handler = fn ? fn : [](const gateway::Prompt&) { return std::string("unused"); };
      b[name] = c;
    };
    mk("gp", [this, gp](const gateway::Prompt& p) {
      ++gp_calls;
      return gp(p);
    });
    mk("spec", {});
    mk("exam", exam);
    gw = std::make_unique<gateway::Gateway>(b, gateway::default_templates(), store);
  }
  gateway::ReplayStore store;
  std::unique_ptr<gateway::Gateway> gw;
  std::atomic<int> gp_calls{0};
};

std::string block(const json& j) { return "```json\n" + j.dump() + "\n```"; }

}  // namespace

TEST(Roster, ExactlyOneGp) {
  auto a = agents();
  a.push_back({"gp2", Role::gp, {}, "gp"});
  EXPECT_THROW(Roster(a, taxonomy()), ValidationError);
  a = agents();
  a.erase(a.begin());
  EXPECT_THROW(Roster(a, taxonomy()), ValidationError);
}

TEST(Roster, DomainsMustBeInTaxonomy) {
  auto a = agents();
  a[1].domain = {"Dermatology"};
  EXPECT_THROW(Roster(a, taxonomy()), UnknownLabelError);
  a = agents();
  a[4].domain = {"Orthopedics"};  // examiner domains are modalities
  EXPECT_THROW(Roster(a, taxonomy()), UnknownLabelError);
}

TEST(Roster, FromJson) {
  auto r = Roster::from_json(json::array({{{"agent_id", "gp"}, {"role", "GP"}, {"backend", "b"}},
                                          {{"agent_id", "x"}, {"role", "specialist"}, {"domain", {"Cardiology"}}, {"backend", "b"}}}),
                             taxonomy());
  EXPECT_EQ(r.gp().agent_id, "gp");
  ASSERT_NE(r.find("x"), nullptr);
  EXPECT_EQ(r.find("x")->role, Role::specialist);
  EXPECT_EQ(r.find("nobody"), nullptr);
}

TEST(Recruit, ScriptedPassthrough) {
  Harness h([](const gateway::Prompt&) {
    return block({{"specialists", {"ortho", "resp"}}, {"examiners", {"radiology"}}, {"case_domains", {"Orthopedics", "Respiratory"}}});
  });
  Roster r(agents(), taxonomy());
  auto d = recruit(fall_case(), r, *h.gw);
  EXPECT_EQ(d.specialists, (std::vector<std::string>{"ortho", "resp"}));
  EXPECT_EQ(d.examiners, (std::vector<std::string>{"radiology"}));
  EXPECT_EQ(d.primary_department(), "Orthopedics");
  EXPECT_EQ(h.gp_calls, 1);
}

TEST(Recruit, PromptCarriesCaseAndCatalogButNoGold) {
  std::string seen;
  Harness h([&](const gateway::Prompt& p) {
    seen = p.user;
    return block({{"specialists", {"ortho"}}, {"case_domains", {"Orthopedics"}}});
  });
  auto c = fall_case();
  c.gold = GroundTruth{{"Orthopedics"}, {"SECRET GOLD LABEL"}, {}};
  recruit(c, Roster(agents(), taxonomy()), *h.gw);
  EXPECT_NE(seen.find("Chest pain after a fall"), std::string::npos);
  EXPECT_NE(seen.find("radiology"), std::string::npos);
  EXPECT_EQ(seen.find("SECRET GOLD LABEL"), std::string::npos);
}

TEST(Recruit, PrimaryDepartmentMovesToFront) {
  Harness h([](const gateway::Prompt&) {
    return block({{"specialists", {"resp"}}, {"case_domains", {"Respiratory", "Cardiology"}}, {"primary_department", "Cardiology"}});
  });
  auto d = recruit(fall_case(), Roster(agents(), taxonomy()), *h.gw);
  EXPECT_EQ(d.case_domains, (std::vector<std::string>{"Cardiology", "Respiratory"}));
}

TEST(Recruit, UnknownAgent) {
  Harness h([](const gateway::Prompt&) { return block({{"specialists", {"neuro"}}, {"case_domains", {"Orthopedics"}}}); });
  EXPECT_THROW(recruit(fall_case(), Roster(agents(), taxonomy()), *h.gw), RecruitmentError);
}

TEST(Recruit, EmptySpecialists) {
  Harness h([](const gateway::Prompt&) { return block({{"specialists", json::array()}, {"case_domains", {"Orthopedics"}}}); });
  EXPECT_THROW(recruit(fall_case(), Roster(agents(), taxonomy()), *h.gw), RecruitmentError);
}

TEST(Recruit, ExaminerListedAsSpecialist) {
  Harness h([](const gateway::Prompt&) { return block({{"specialists", {"radiology"}}, {"case_domains", {"Orthopedics"}}}); });
  EXPECT_THROW(recruit(fall_case(), Roster(agents(), taxonomy()), *h.gw), RecruitmentError);
}

TEST(Recruit, OneStructuredRetryThenError) {
  Harness h([](const gateway::Prompt&) { return std::string("Let me think about it."); });
  EXPECT_THROW(recruit(fall_case(), Roster(agents(), taxonomy()), *h.gw), NoStructuredBlock);
  EXPECT_EQ(h.gp_calls, 2);
}

TEST(DomainGate, Examples) {
  AgentSpec cardio{"cardio", Role::specialist, {"Cardiology"}, "b"};
  AgentSpec resp{"resp", Role::specialist, {"respiratory"}, "b"};
  EXPECT_FALSE(domain_gate(cardio, {"Orthopedics", "Respiratory"}));
  EXPECT_TRUE(domain_gate(resp, {"Orthopedics", "Respiratory"}));
  AgentSpec both{"x", Role::specialist, {"Orthopedics", "Respiratory"}, "b"};
  EXPECT_TRUE(domain_gate(both, {"Orthopedics", "Respiratory"}));
  EXPECT_THROW(domain_gate(cardio, {}), PreconditionError);
}

TEST(EvidenceBase, RecordOnly) {
  Harness h([](const gateway::Prompt&) { return std::string(); });
  auto c = fall_case();
  c.raw_findings.clear();
  auto eb = build_evidence_base(c, {}, *h.gw);
  ASSERT_EQ(eb.entries.size(), 2u);
  EXPECT_EQ(eb.entries[0].entry_id, "E1");
  EXPECT_EQ(eb.entries[0].field, "chief_complaint");
  EXPECT_EQ(eb.entries[1].entry_id, "E2");
  EXPECT_EQ(eb.entries[1].field, "medical_history");
}

TEST(EvidenceBase, EmptyHistoryOmitted) {
  Harness h([](const gateway::Prompt&) { return std::string(); });
  auto c = fall_case();
  c.medical_history = "";
  auto eb = build_evidence_base(c, {}, *h.gw);
  EXPECT_EQ(eb.entries.size(), 1u);
}

TEST(EvidenceBase, ExaminerReportAppended) {
  Harness h([](const gateway::Prompt&) { return std::string(); },
            [](const gateway::Prompt& p) {
              return p.user.find("Raw finding F1") != std::string::npos ? std::string("  Fracture of the left 6th rib.  ")
                                                                         : std::string("?");
            });
  Roster r(agents(), taxonomy());
  auto eb = build_evidence_base(fall_case(), {*r.find("radiology")}, *h.gw);
  ASSERT_EQ(eb.entries.size(), 3u);
  EXPECT_EQ(eb.entries[2].entry_id, "E3");
  EXPECT_EQ(eb.entries[2].origin, EvidenceEntry::Origin::exam_report);
  EXPECT_EQ(eb.entries[2].examiner_id, "radiology");
  EXPECT_EQ(eb.entries[2].finding_id, "F1");
  EXPECT_EQ(eb.entries[2].text, "Fracture of the left 6th rib.");
}

TEST(EvidenceBase, UnmatchedExaminerSkippedWithNotice) {
  Harness h([](const gateway::Prompt&) { return std::string(); }, [](const gateway::Prompt&) { return std::string("x"); });
  Roster r(agents(), taxonomy());
  std::vector<std::string> notices;
  auto eb = build_evidence_base(fall_case(), {*r.find("pathology")}, *h.gw,
                                [&](const std::string& n) { notices.push_back(n); });
  EXPECT_EQ(eb.entries.size(), 2u);
  ASSERT_EQ(notices.size(), 1u);
  EXPECT_NE(notices[0].find("pathology"), std::string::npos);
}

TEST(EvidenceBase, DeterministicAcrossRuns) {
  auto exam = [](const gateway::Prompt& p) {
    auto pos = p.user.find("Raw finding ");
    return "report for " + p.user.substr(pos, 14);
  };
  auto extra = agents();
  extra.push_back({"lab2", Role::examiner, {"lab", "imaging"}, "exam"});
  Roster r(extra, taxonomy());
  std::vector<AgentSpec> exams{*r.find("radiology"), *r.find("lab2")};
  std::string first;
  for (int i = 0; i < 5; ++i) {
    Harness h([](const gateway::Prompt&) { return std::string(); }, exam);
    auto dump = to_json(build_evidence_base(fall_case(), exams, *h.gw)).dump();
    if (i == 0) first = dump;
    EXPECT_EQ(dump, first);
  }
  auto j = nlohmann::json::parse(first);
  // roster-then-finding order: radiology F1, then lab2 F1, lab2 F2
  ASSERT_EQ(j.size(), 5u);
  EXPECT_EQ(j[2]["origin"]["agent_id"], "radiology");
  EXPECT_EQ(j[3]["origin"]["agent_id"], "lab2");
  EXPECT_EQ(j[3]["origin"]["finding_id"], "F1");
  EXPECT_EQ(j[4]["origin"]["finding_id"], "F2");
}
