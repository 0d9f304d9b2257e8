#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "medcollab/gateway.hpp"
#include "medcollab/ibis.hpp"
#include "stub_server.hpp"

using namespace medcollab;
using namespace medcollab::gateway;
using nlohmann::json;

namespace {

BackendConfig http_backend(const std::string& endpoint, int attempts = 3) {
  BackendConfig c;
  c.name = "remote";
  c.endpoint = endpoint;
  c.model = "stub-model";
  c.max_tokens = 64;
  c.timeout = std::chrono::milliseconds(2000);
  c.retry = {attempts, std::chrono::milliseconds(1)};
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("medcollab-gw-" + std::to_string(::getpid()) + "-" + name);
  std::filesystem::remove(p);
  return p;
}

const Prompt kPrompt{"system text", "user text"};

}  // namespace

TEST(Gateway, LiveReturnsFirstChoice) {
  stub::Server s([](int, const httplib::Request&) { return stub::Response{200, stub::completion("hello")}; });
  ReplayStore store(Mode::live);
  EXPECT_EQ(complete(http_backend(s.endpoint()), kPrompt, store), "hello");
  EXPECT_EQ(s.hits(), 1);
  auto body = json::parse(s.requests().at(0));
  EXPECT_EQ(body["model"], "stub-model");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["max_tokens"], 64);
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "user text");
}

TEST(Gateway, BearerTokenFromEnvironment) {
  stub::Server s([](int, const httplib::Request&) { return stub::Response{200, stub::completion("ok")}; });
  ::setenv("MEDCOLLAB_TEST_KEY", "sekret", 1);
  auto cfg = http_backend(s.endpoint());
  cfg.api_key_env = "MEDCOLLAB_TEST_KEY";
  ReplayStore store(Mode::live);
  complete(cfg, kPrompt, store);
  EXPECT_EQ(s.auth_headers().at(0), "Bearer sekret");
}

TEST(Gateway, ServerErrorExhaustsRetries) {
  stub::Server s([](int, const httplib::Request&) { return stub::Response{500, "{\"error\":\"boom\"}"}; });
  ReplayStore store(Mode::live);
  try {
    complete(http_backend(s.endpoint(), 3), kPrompt, store);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_EQ(e.status(), 500);
    EXPECT_EQ(e.body(), "{\"error\":\"boom\"}");
  }
  EXPECT_EQ(s.hits(), 3);
}

TEST(Gateway, RecoversWithinRetryBudget) {
  stub::Server s([](int n, const httplib::Request&) {
    return n < 3 ? stub::Response{503, "busy"} : stub::Response{200, stub::completion("third time")};
  });
  ReplayStore store(Mode::live);
  EXPECT_EQ(complete(http_backend(s.endpoint(), 3), kPrompt, store), "third time");
  EXPECT_EQ(s.hits(), 3);
}

TEST(Gateway, ClientErrorIsNotRetried) {
  stub::Server s([](int, const httplib::Request&) { return stub::Response{401, "denied"}; });
  ReplayStore store(Mode::live);
  try {
    complete(http_backend(s.endpoint(), 3), kPrompt, store);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.status(), 401);
    EXPECT_EQ(e.body(), "denied");
  }
  EXPECT_EQ(s.hits(), 1);
}

TEST(Gateway, TimeoutCountsAsAttempt) {
  stub::Server s([](int, const httplib::Request&) { return stub::Response{200, stub::completion("late"), 400}; });
  auto cfg = http_backend(s.endpoint(), 2);
  cfg.timeout = std::chrono::milliseconds(100);
  ReplayStore store(Mode::live);
  auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(complete(cfg, kPrompt, store), BackendError);
  auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_LT(elapsed, std::chrono::milliseconds(700));
  EXPECT_EQ(s.hits(), 2);
}

TEST(Gateway, MalformedCompletionIsBackendError) {
  stub::Server s([](int, const httplib::Request&) { return stub::Response{200, "{\"choices\":[]}"}; });
  ReplayStore store(Mode::live);
  EXPECT_THROW(complete(http_backend(s.endpoint()), kPrompt, store), BackendError);
}

TEST(Gateway, RecordThenReplayWithoutNetwork) {
  auto file = temp_file("store.jsonl");
  stub::Server s([](int, const httplib::Request&) { return stub::Response{200, stub::completion("recorded")}; });
  auto cfg = http_backend(s.endpoint());
  {
    ReplayStore rec(Mode::record, file);
    EXPECT_EQ(complete(cfg, kPrompt, rec), "recorded");
  }
  EXPECT_EQ(s.hits(), 1);
  ReplayStore rep(Mode::replay, file);
  EXPECT_EQ(rep.size(), 1u);
  EXPECT_EQ(complete(cfg, kPrompt, rep), "recorded");
  EXPECT_EQ(s.hits(), 1);

  Prompt other{"system text", "different user text"};
  try {
    complete(cfg, other, rep);
    FAIL();
  } catch (const ReplayMiss& e) {
    EXPECT_EQ(e.digest(), request_digest(cfg, other));
    EXPECT_NE(std::string(e.what()).find(e.digest()), std::string::npos);
  }
  EXPECT_EQ(s.hits(), 1);
  std::filesystem::remove(file);
}

TEST(Gateway, ReplayRequiresStoreFile) {
  EXPECT_THROW(ReplayStore(Mode::replay, temp_file("absent.jsonl")), Error);
}

TEST(Gateway, DigestCoversEveryKeyField) {
  BackendConfig a;
  a.name = "x";
  a.kind = BackendKind::scripted;
  a.model = "m";
  auto base = request_digest(a, kPrompt);
  EXPECT_EQ(base, request_digest(a, kPrompt));
  EXPECT_NE(base, request_digest(a, {"system text", "user text!"}));
  EXPECT_NE(base, request_digest(a, {"system", "user text"}));
  auto b = a;
  b.name = "y";
  EXPECT_NE(base, request_digest(b, kPrompt));
  b = a;
  b.model = "m2";
  EXPECT_NE(base, request_digest(b, kPrompt));
  b = a;
  b.temperature = 0.7;
  EXPECT_NE(base, request_digest(b, kPrompt));
}

TEST(Gateway, ScriptedFirstMatchingRule) {
  BackendConfig c;
  c.name = "s";
  c.kind = BackendKind::scripted;
  c.script = {{{"alpha", "beta"}, "both"}, {{"alpha"}, "alpha only"}, {{}, "fallback"}};
  ReplayStore store(Mode::live);
  EXPECT_EQ(complete(c, {"", "alpha and beta"}, store), "both");
  EXPECT_EQ(complete(c, {"alpha", "gamma"}, store), "alpha only");
  EXPECT_EQ(complete(c, {"", "gamma"}, store), "fallback");
}

TEST(Render, AllSlotsBound) {
  PromptTemplate t{"t", "sys", "Case: {{case}}\nEvidence: {{evidence}}", {"case", "evidence"}};
  auto p = render(t, {{"case", "C"}, {"evidence", "E"}});
  EXPECT_EQ(p.system, "sys");
  EXPECT_EQ(p.user, "Case: C\nEvidence: E");
  EXPECT_EQ(render(t, {{"case", "C"}, {"evidence", "E"}}), p);
}

TEST(Render, MissingSlotNamed) {
  PromptTemplate t{"t", "", "{{case}} {{evidence}}", {"case", "evidence"}};
  try {
    render(t, {{"case", "C"}});
    FAIL();
  } catch (const RenderError& e) {
    EXPECT_NE(std::string(e.what()).find("evidence"), std::string::npos);
  }
}

TEST(Render, EmptyFeedbackDropsSection) {
  const auto templates = default_templates();
  const auto& t = templates.at("diagnose");
  std::map<std::string, std::string> b{{"agent", "a"}, {"issue", "i"}, {"case", "c"},
                                       {"evidence", "e"}, {"feedback", ""}, {"schema", "s"}};
  auto without = render(t, b).user;
  EXPECT_EQ(without.find("GP feedback"), std::string::npos);
  b["feedback"] = "tighten your evidence";
  auto with = render(t, b).user;
  EXPECT_NE(with.find("GP feedback from the previous round:\ntighten your evidence"), std::string::npos);
}

TEST(Extract, FirstBlockWins) {
  std::string reply = "intro\n```json\n{\"logic_score\": 0.4, \"violations\": []}\n```\n"
                      "```json\n{\"logic_score\": 0.9, \"violations\": []}\n```";
  EXPECT_EQ(extract_structured(reply, "audit_score")["logic_score"], 0.4);
}

TEST(Extract, SkipsNonJsonFences) {
  std::string reply = "```python\nprint(1)\n```\n```\n{\"logic_score\": 1}\n```";
  EXPECT_EQ(extract_structured(reply, "audit_score")["logic_score"], 1);
}

TEST(Extract, ProseOnlyIsNoBlock) {
  EXPECT_THROW(extract_structured("I think it is pneumonia.", "report_sections"), NoStructuredBlock);
}

TEST(Extract, SchemaViolationNamesField) {
  try {
    extract_structured("```json\n{\"DB\": \"x\", \"DD\": \"y\", \"TP\": \"z\"}\n```", "report_sections");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "TX");
  }
  try {
    extract_structured("```json\n[{\"position\": \"A\", \"argument\": \"b\"}]\n```", "ibis_tuple_set");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "evidence");
  }
}

TEST(Extract, RecruitmentSchema) {
  auto j = extract_structured(
      "```json\n{\"specialists\": [\"ortho\"], \"examiners\": [], \"case_domains\": [\"Orthopedics\"]}\n```",
      "recruitment_decision");
  EXPECT_EQ(j["specialists"][0], "ortho");
  EXPECT_THROW(extract_structured("```json\n{\"specialists\": \"ortho\"}\n```", "recruitment_decision"), SchemaError);
}

TEST(Reminder, RetriesExactlyOnce) {
  int calls = 0;
  BackendConfig c;
  c.name = "p";
  c.kind = BackendKind::in_process;
  c.handler = [&](const Prompt& p) {
    ++calls;
    if (p.user.find("could not be parsed") == std::string::npos) return std::string("no block here");
    return std::string("```json\n{\"logic_score\": 0.5}\n```");
  };
  ReplayStore store(Mode::live);
  Gateway gw({{"p", c}}, {}, store);
  StructuredCall info;
  auto j = call_with_reminder(gw, "p", {"s", "u"}, "audit_score",
                              [](const std::string& r) { return extract_structured(r, "audit_score"); }, &info);
  EXPECT_EQ(j["logic_score"], 0.5);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(info.digests.size(), 2u);

  calls = 0;
  c.handler = [&](const Prompt&) {
    ++calls;
    return std::string("still prose");
  };
  Gateway gw2({{"p", c}}, {}, store);
  EXPECT_THROW(call_with_reminder(gw2, "p", {"s", "u"}, "audit_score",
                                  [](const std::string& r) { return extract_structured(r, "audit_score"); }),
               NoStructuredBlock);
  EXPECT_EQ(calls, 2);
}

TEST(Config, BackendValidation) {
  EXPECT_THROW(BackendConfig::from_json(json{{"name", "x"}, {"endpoint", "http://h/v1"}, {"retry", {{"max_attempts", 0}}}}),
               ValidationError);
  EXPECT_THROW(BackendConfig::from_json(json{{"name", "x"}}), ValidationError);
  EXPECT_THROW(BackendConfig::from_json(json{{"name", "x"}, {"endpoint", "http://h"}, {"temperature", -1}}),
               ValidationError);
  auto c = BackendConfig::from_json(json{{"name", "x"}, {"endpoint", "http://h/v1"}, {"timeout_ms", 1500}});
  EXPECT_EQ(c.timeout, std::chrono::milliseconds(1500));
  EXPECT_EQ(c.temperature, 0.0);
  EXPECT_EQ(c.retry.max_attempts, 3);
}
