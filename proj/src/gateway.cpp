#include "medcollab/gateway.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include "medcollab/casefile.hpp"
#include "medcollab/ibis.hpp"
#include "medcollab/text.hpp"

namespace medcollab::gateway {

using nlohmann::json;

void BackendConfig::validate() const {
  if (name.empty()) throw ValidationError("backend name must be non-empty");
  if (retry.max_attempts < 1) throw ValidationError("backend '" + name + "': max_attempts must be >= 1");
  if (temperature < 0) throw ValidationError("backend '" + name + "': temperature must be >= 0");
  if (kind == BackendKind::http && endpoint.empty())
    throw ValidationError("backend '" + name + "': endpoint required for http backends");
  if (kind == BackendKind::in_process && !handler)
    throw ValidationError("backend '" + name + "': in-process backend has no handler");
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    auto kind = j.value("kind", std::string("http"));
    if (kind == "http") c.kind = BackendKind::http;
    else if (kind == "scripted") c.kind = BackendKind::scripted;
    else throw ValidationError("backend '" + c.name + "': unknown kind '" + kind + "'");
    c.endpoint = j.value("endpoint", std::string());
    c.model = j.value("model", std::string());
    c.temperature = j.value("temperature", 0.0);
    c.max_tokens = j.value("max_tokens", 2048);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    if (auto r = j.find("retry"); r != j.end()) {
      c.retry.max_attempts = r->value("max_attempts", 3);
      c.retry.backoff = std::chrono::milliseconds(r->value("backoff_ms", 250));
    }
    c.api_key_env = j.value("api_key_env", std::string());
    if (auto s = j.find("script"); s != j.end()) {
      for (const auto& rule : *s) {
        ScriptRule r;
        if (auto w = rule.find("when"); w != rule.end()) {
          if (w->is_string()) r.when.push_back(w->get<std::string>());
          else r.when = w->get<std::vector<std::string>>();
        }
        r.reply = rule.at("reply").get<std::string>();
        c.script.push_back(std::move(r));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string request_digest(const BackendConfig& config, const Prompt& prompt) {
  json key = json::array({config.name, prompt.system, prompt.user, config.model, config.temperature});
  return text::sha256_hex(key.dump());
}

Mode parse_mode(const std::string& s) {
  if (s == "live") return Mode::live;
  if (s == "record") return Mode::record;
  if (s == "replay") return Mode::replay;
  throw ValidationError("unknown mode '" + s + "'");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::live: return "live";
    case Mode::record: return "record";
    case Mode::replay: return "replay";
  }
  return "?";
}

ReplayStore::ReplayStore(Mode mode, std::optional<std::filesystem::path> file)
    : mode_(mode), file_(std::move(file)) {
  if (!file_ || mode_ == Mode::live) return;
  std::ifstream in(*file_);
  if (!in) {
    if (mode_ == Mode::replay) throw ParseError("cannot read replay store " + file_->string());
    return;
  }
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      replies_.emplace(j.at("digest").get<std::string>(), j.at("reply").get<std::string>());
    } catch (const json::exception& e) {
      throw ParseError("replay store " + file_->string() + ": " + e.what(), n);
    }
    ++n;
  }
}

std::optional<std::string> ReplayStore::lookup(const std::string& digest) const {
  std::lock_guard lock(mu_);
  if (auto it = replies_.find(digest); it != replies_.end()) return it->second;
  return std::nullopt;
}

void ReplayStore::record(const std::string& digest, const std::string& reply) {
  std::lock_guard lock(mu_);
  if (!replies_.emplace(digest, reply).second) return;
  if (!file_) return;
  std::ofstream out(*file_, std::ios::app);
  if (!out) throw Error("cannot append to replay store " + file_->string());
  out << json{{"digest", digest}, {"reply", reply}}.dump() << "\n";
}

size_t ReplayStore::size() const {
  std::lock_guard lock(mu_);
  return replies_.size();
}

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ValidationError("invalid endpoint URL '" + url + "'");
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

std::string http_complete(const BackendConfig& config, const Prompt& prompt) {
  auto url = split_url(config.endpoint);
  httplib::Client cli(url.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json messages = json::array();
  if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
  messages.push_back({{"role", "user"}, {"content", prompt.user}});
  const std::string body = json{{"model", config.model},
                                {"messages", messages},
                                {"temperature", config.temperature},
                                {"max_tokens", config.max_tokens}}
                               .dump();

  std::string last_error;
  int last_status = 0;
  std::string last_body;
  auto backoff = config.retry.backoff;
  for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
    auto res = cli.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      last_status = 0;
    } else if (res->status >= 200 && res->status < 300) {
      try {
        auto j = json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw BackendError("backend '" + config.name + "': malformed completion: " + e.what(), attempt,
                           res->status, res->body);
      }
    } else {
      last_status = res->status;
      last_body = res->body;
      last_error = "HTTP status " + std::to_string(res->status);
      if (!retryable_status(res->status))
        throw BackendError("backend '" + config.name + "': " + last_error, attempt, last_status, last_body);
    }
    if (attempt < config.retry.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw BackendError("backend '" + config.name + "': " + last_error + " after " +
                         std::to_string(config.retry.max_attempts) + " attempts",
                     config.retry.max_attempts, last_status, last_body);
}

std::string scripted_complete(const BackendConfig& config, const Prompt& prompt) {
  const std::string haystack = prompt.system + "\n" + prompt.user;
  for (const auto& rule : config.script) {
    bool ok = true;
    for (const auto& w : rule.when)
      if (haystack.find(w) == std::string::npos) {
        ok = false;
        break;
      }
    if (ok) return rule.reply;
  }
  throw BackendError("scripted backend '" + config.name + "': no rule matches prompt", 1);
}

std::string invoke(const BackendConfig& config, const Prompt& prompt) {
  switch (config.kind) {
    case BackendKind::http: return http_complete(config, prompt);
    case BackendKind::scripted: return scripted_complete(config, prompt);
    case BackendKind::in_process: {
      std::string last;
      for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
        try {
          return config.handler(prompt);
        } catch (const std::exception& e) {
          last = e.what();
        }
      }
      throw BackendError("backend '" + config.name + "': " + last, config.retry.max_attempts);
    }
  }
  throw Error("unreachable backend kind");
}

}  // namespace

std::string complete(const BackendConfig& config, const Prompt& prompt, ReplayStore& store) {
  config.validate();
  if (store.mode() == Mode::replay) {
    auto digest = request_digest(config, prompt);
    if (auto hit = store.lookup(digest)) return *hit;
    throw ReplayMiss(digest);
  }
  auto reply = invoke(config, prompt);
  if (store.mode() == Mode::record) store.record(request_digest(config, prompt), reply);
  return reply;
}

PromptTemplate PromptTemplate::from_json(const std::string& id, const json& j) {
  PromptTemplate t;
  t.template_id = id;
  try {
    t.instructions = j.value("instructions", std::string());
    t.body = j.at("body").get<std::string>();
    t.slots = j.value("slots", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ParseError("template '" + id + "': " + e.what());
  }
  return t;
}

Prompt render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings) {
  for (const auto& slot : tmpl.slots)
    if (!bindings.contains(slot))
      throw RenderError("template '" + tmpl.template_id + "': unbound slot '" + slot + "'");

  auto value_of = [&](const std::string& name) -> const std::string& {
    auto it = bindings.find(name);
    if (it == bindings.end() ||
        std::find(tmpl.slots.begin(), tmpl.slots.end(), name) == tmpl.slots.end())
      throw RenderError("template '" + tmpl.template_id + "': undeclared slot '" + name + "'");
    return it->second;
  };

  std::string out;
  const std::string& s = tmpl.body;
  size_t pos = 0;
  while (pos < s.size()) {
    auto open = s.find("{{", pos);
    if (open == std::string::npos) {
      out.append(s, pos);
      break;
    }
    out.append(s, pos, open - pos);
    auto close = s.find("}}", open);
    if (close == std::string::npos)
      throw RenderError("template '" + tmpl.template_id + "': unterminated placeholder");
    std::string tag = s.substr(open + 2, close - open - 2);
    pos = close + 2;
    if (!tag.empty() && tag[0] == '#') {
      std::string name = tag.substr(1);
      std::string end_tag = "{{/" + name + "}}";
      auto end = s.find(end_tag, pos);
      if (end == std::string::npos)
        throw RenderError("template '" + tmpl.template_id + "': unclosed section '" + name + "'");
      if (!value_of(name).empty()) {
        PromptTemplate inner = tmpl;
        inner.body = s.substr(pos, end - pos);
        out += render(inner, bindings).user;
      }
      pos = end + end_tag.size();
    } else {
      out += value_of(tag);
    }
  }
  return {tmpl.instructions, out};
}

std::map<std::string, PromptTemplate> default_templates() {
  std::map<std::string, PromptTemplate> t;
  t["recruit"] = {
      "recruit",
      "You are the General Practitioner (GP) agent of a virtual hospital. You triage the case and recruit "
      "the clinical specialists and examination agents it needs.",
      "Patient case:\n{{case}}\n\nAvailable agents:\n{{roster}}\n\n"
      "Select the relevant specialists and examiners, and list the clinical departments the case belongs to "
      "(most relevant first).\n{{schema}}",
      {"case", "roster", "schema"}};
  t["examine"] = {
      "examine",
      "You are an examination agent. Interpret raw findings of your modality into a concise professional "
      "examination report. Report only what the findings support.",
      "Patient case:\n{{case}}\n\nModality: {{modality}}\nRaw finding {{finding_id}}:\n{{finding}}\n\n"
      "Write the examination report as plain text.",
      {"case", "modality", "finding_id", "finding"}};
  t["diagnose"] = {
      "diagnose",
      "You are a clinical specialist agent. Argue in IBIS form: every Position needs an Argument and Evidence "
      "drawn strictly from the Evidence Base (cite entry ids) or a recognized medical knowledge base (source "
      "\"kb:<citation>\"). Declare causal links (proposed_causes) and comorbidities (comorbid_with) between "
      "positions. If the case is outside your domain, reply ABSTAIN.",
      "Agent: {{agent}}\nIssue: {{issue}}\n\nPatient case:\n{{case}}\n\nEvidence Base:\n{{evidence}}\n"
      "{{#feedback}}\nGP feedback from the previous round:\n{{feedback}}\n{{/feedback}}\n{{schema}}",
      {"agent", "issue", "case", "evidence", "feedback", "schema"}};
  t["audit"] = {
      "audit",
      "You are the GP agent auditing a specialist's argumentation. Evaluate each Argument against its "
      "Evidence and score logical soundness in [0,1].",
      "Patient case:\n{{case}}\n\nEvidence Base:\n{{evidence}}\n\nSpecialist {{agent}} tuples:\n{{tuples}}\n\n"
      "{{schema}}",
      {"case", "evidence", "agent", "tuples", "schema"}};
  t["report"] = {
      "report",
      "You are the GP agent writing the final consultation report from the consensus diagnostic chain.",
      "Patient case:\n{{case}}\n\nConsensus causal chain: {{chain}}\n\nSupporting arguments:\n{{arguments}}\n\n"
      "Cited evidence:\n{{evidence}}\n\n{{schema}}",
      {"case", "chain", "arguments", "evidence", "schema"}};
  t["format_reminder"] = {
      "format_reminder", "",
      "Your previous reply could not be parsed ({{error}}). Reply again with exactly one fenced ```json block.\n"
      "{{schema}}",
      {"error", "schema"}};
  return t;
}

std::optional<std::string> first_fenced_block(const std::string& reply) {
  size_t pos = 0;
  while (true) {
    auto open = reply.find("```", pos);
    if (open == std::string::npos) return std::nullopt;
    auto eol = reply.find('\n', open);
    if (eol == std::string::npos) return std::nullopt;
    auto info = text::trim(std::string_view(reply).substr(open + 3, eol - open - 3));
    auto close = reply.find("```", eol + 1);
    if (close == std::string::npos) return std::nullopt;
    if (info.empty() || text::fold(info) == "json") return reply.substr(eol + 1, close - eol - 1);
    pos = close + 3;
  }
}

namespace {

void require_string_array(const json& j, const char* key, bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw SchemaError(key, "missing");
    return;
  }
  if (!it->is_array()) throw SchemaError(key, "must be an array");
  for (const auto& e : *it)
    if (!e.is_string()) throw SchemaError(key, "must contain only strings");
}

void validate_recruitment(const json& j) {
  if (!j.is_object()) throw SchemaError("<root>", "must be an object");
  require_string_array(j, "specialists", true);
  require_string_array(j, "examiners", false);
  require_string_array(j, "case_domains", true);
  if (j.contains("rationale") && !j["rationale"].is_string()) throw SchemaError("rationale", "must be a string");
  if (j.contains("primary_department") && !j["primary_department"].is_string())
    throw SchemaError("primary_department", "must be a string");
}

void validate_audit(const json& j) {
  if (!j.is_object()) throw SchemaError("<root>", "must be an object");
  if (!j.contains("logic_score")) throw SchemaError("logic_score", "missing");
  if (!j["logic_score"].is_number()) throw SchemaError("logic_score", "must be a number");
  if (auto v = j.find("violations"); v != j.end()) {
    if (!v->is_array()) throw SchemaError("violations", "must be an array");
    for (const auto& e : *v)
      if (!e.is_object() || !e.value("kind", json()).is_string())
        throw SchemaError("violations", "entries need a string 'kind'");
  }
}

void validate_report(const json& j) {
  if (!j.is_object()) throw SchemaError("<root>", "must be an object");
  for (Section s : kAllSections) {
    std::string key(section_name(s));
    if (!j.contains(key)) throw SchemaError(key, "missing");
    if (!j[key].is_string()) throw SchemaError(key, "must be a string");
  }
}

}  // namespace

json extract_structured(const std::string& reply, const std::string& schema_id) {
  using Validator = void (*)(const json&);
  static const std::map<std::string, Validator> kSchemas{
      {"ibis_tuple_set", [](const json& j) { ibis::validate_block(j); }},
      {"recruitment_decision", validate_recruitment},
      {"audit_score", validate_audit},
      {"report_sections", validate_report},
  };
  auto it = kSchemas.find(schema_id);
  if (it == kSchemas.end()) throw Error("unknown schema '" + schema_id + "'");
  auto block = first_fenced_block(reply);
  if (!block) throw NoStructuredBlock();
  json j;
  try {
    j = json::parse(*block);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
  }
  it->second(j);
  return j;
}

Gateway::Gateway(std::map<std::string, BackendConfig> backends, std::map<std::string, PromptTemplate> templates,
                 ReplayStore& store)
    : backends_(std::move(backends)), templates_(std::move(templates)), store_(store) {
  for (auto& [id, t] : default_templates()) templates_.try_emplace(id, t);
}

Gateway Gateway::from_json(const json& j, ReplayStore& store) {
  std::map<std::string, BackendConfig> backends;
  std::map<std::string, PromptTemplate> templates;
  if (!j.is_object()) throw ParseError("gateway config must be an object");
  for (const auto& b : j.value("backends", json::array())) {
    auto cfg = BackendConfig::from_json(b);
    auto name = cfg.name;
    if (!backends.emplace(name, std::move(cfg)).second)
      throw ValidationError("duplicate backend name '" + name + "'");
  }
  const auto template_overrides = j.value("templates", json::object());
  for (const auto& [id, t] : template_overrides.items())
    templates.emplace(id, PromptTemplate::from_json(id, t));
  return Gateway(std::move(backends), std::move(templates), store);
}

const BackendConfig& Gateway::backend(const std::string& name) const {
  auto it = backends_.find(name);
  if (it == backends_.end()) throw ValidationError("unknown backend '" + name + "'");
  return it->second;
}

const PromptTemplate& Gateway::templ(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw ValidationError("unknown template '" + id + "'");
  return it->second;
}

Reply Gateway::call(const std::string& name, const Prompt& prompt) {
  const auto& cfg = backend(name);
  return {complete(cfg, prompt, store_), request_digest(cfg, prompt)};
}

}  // namespace medcollab::gateway

namespace medcollab::gateway {

const std::string& schema_text(const std::string& schema_id) {
  static const std::map<std::string, std::string> kText{
      {"recruitment_decision",
       "Reply with one fenced ```json block: {\"specialists\": [agent_id...], \"examiners\": [agent_id...], "
       "\"case_domains\": [department...], \"primary_department\": department, \"rationale\": text}"},
      {"ibis_tuple_set",
       "Reply with one fenced ```json block holding a list of IBIS tuples: [{\"position\": diagnosis, "
       "\"argument\": rationale, \"evidence\": [{\"source\": \"E<n>\" or \"kb:<citation>\", \"excerpt\": "
       "verbatim text}], \"proposed_causes\": [diagnosis...], \"comorbid_with\": [diagnosis...]}], or "
       "{\"abstain\": true} if the case is outside your domain."},
      {"audit_score",
       "Reply with one fenced ```json block: {\"logic_score\": number in [0,1], \"violations\": [{\"kind\": "
       "text, \"detail\": text}]}"},
      {"report_sections",
       "Reply with one fenced ```json block: {\"DB\": diagnostic basis, \"DD\": differential diagnosis, "
       "\"TP\": therapeutic principle, \"TX\": treatment plan}"},
  };
  auto it = kText.find(schema_id);
  if (it == kText.end()) throw Error("unknown schema '" + schema_id + "'");
  return it->second;
}

}  // namespace medcollab::gateway

namespace medcollab::gateway {

Gateway load_gateway(const std::filesystem::path& path, ReplayStore& store) {
  auto j = read_json_file(path);
  if (j.is_object() && j.contains("backends") && j["backends"].is_array()) {
    for (auto& b : j["backends"]) {
      if (!b.is_object() || !b.contains("script_file")) continue;
      auto script_path = path.parent_path() / b["script_file"].get<std::string>();
      b["script"] = read_json_file(script_path);
      b.erase("script_file");
    }
  }
  return Gateway::from_json(j, store);
}

}  // namespace medcollab::gateway
