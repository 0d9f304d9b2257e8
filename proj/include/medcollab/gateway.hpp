#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcollab/error.hpp"

namespace medcollab::gateway {

/// A rendered chat request: the role instructions plus the user turn.
struct Prompt {
  std::string system;
  std::string user;

  bool operator==(const Prompt&) const = default;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{250};  // doubled after each failed attempt
};

/// First rule whose every `when` substring occurs in the prompt answers; an empty `when` matches anything.
struct ScriptRule {
  std::vector<std::string> when;
  std::string reply;
};

enum class BackendKind { http, scripted, in_process };

struct BackendConfig {
  std::string name;
  BackendKind kind = BackendKind::http;
  std::string endpoint;  // full chat-completions URL
  std::string model;
  double temperature = 0.0;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::string api_key_env;  // bearer token read from this variable when set
  std::vector<ScriptRule> script;
  std::function<std::string(const Prompt&)> handler;  // in_process only

  void validate() const;
  static BackendConfig from_json(const nlohmann::json& j);
};

/// Stable content digest of (backend name, prompt, model, temperature).
std::string request_digest(const BackendConfig& config, const Prompt& prompt);

enum class Mode { live, record, replay };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

/// Digest-keyed reply store backed by an optional JSON-lines file of {digest, reply}.
class ReplayStore {
 public:
  explicit ReplayStore(Mode mode, std::optional<std::filesystem::path> file = std::nullopt);

  Mode mode() const { return mode_; }
  std::optional<std::string> lookup(const std::string& digest) const;
  /// Stores the reply and appends it to the backing file; first write for a digest wins.
  void record(const std::string& digest, const std::string& reply);
  size_t size() const;

 private:
  Mode mode_;
  std::optional<std::filesystem::path> file_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> replies_;
};

/// Returns the reply text for one request under the store's mode.
std::string complete(const BackendConfig& config, const Prompt& prompt, ReplayStore& store);

struct PromptTemplate {
  std::string template_id;
  std::string instructions;  // system message
  std::string body;          // {{slot}} substitution, {{#slot}}...{{/slot}} kept only when slot non-empty
  std::vector<std::string> slots;

  static PromptTemplate from_json(const std::string& id, const nlohmann::json& j);
};

class RenderError : public Error {
 public:
  using Error::Error;
};

Prompt render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings);

/// Built-in templates: recruit, examine, diagnose, audit, report, format_reminder.
std::map<std::string, PromptTemplate> default_templates();

/// Content of the first ``` or ```json fenced block, if any.
std::optional<std::string> first_fenced_block(const std::string& reply);

/// Extracts the first fenced JSON block and validates it against a registered schema:
/// ibis_tuple_set, recruitment_decision, audit_score, report_sections.
nlohmann::json extract_structured(const std::string& reply, const std::string& schema_id);

struct Reply {
  std::string text;
  std::string digest;
};

/// Named backends, templates, and the replay store shared by one run.
class Gateway {
 public:
  Gateway(std::map<std::string, BackendConfig> backends, std::map<std::string, PromptTemplate> templates,
          ReplayStore& store);

  /// Loads {"backends": [...], "templates": {...}}; templates override the defaults by id.
  static Gateway from_json(const nlohmann::json& j, ReplayStore& store);

  bool has_backend(const std::string& name) const { return backends_.contains(name); }
  const BackendConfig& backend(const std::string& name) const;
  const PromptTemplate& templ(const std::string& id) const;
  ReplayStore& store() { return store_; }

  Reply call(const std::string& backend, const Prompt& prompt);

 private:
  std::map<std::string, BackendConfig> backends_;
  std::map<std::string, PromptTemplate> templates_;
  ReplayStore& store_;
};

}  // namespace medcollab::gateway

namespace medcollab::gateway {

/// Human-readable schema description embedded in prompts for a structured reply.
const std::string& schema_text(const std::string& schema_id);

struct StructuredCall {
  std::vector<std::string> digests;  // one per backend request made
  std::string reply;                 // the reply that parsed
};

/// Calls `backend`; if `parse` throws NoStructuredBlock or SchemaError, re-prompts exactly once with the
/// format reminder appended and parses again (a second failure propagates).
template <typename Parse>
auto call_with_reminder(Gateway& gw, const std::string& backend, const Prompt& prompt, const std::string& schema_id,
                        Parse&& parse, StructuredCall* info = nullptr) {
  auto first = gw.call(backend, prompt);
  if (info) info->digests.push_back(first.digest);
  std::string error;
  try {
    auto v = parse(first.text);
    if (info) info->reply = first.text;
    return v;
  } catch (const NoStructuredBlock& e) {
    error = e.what();
  } catch (const SchemaError& e) {
    error = e.what();
  }
  Prompt retry = prompt;
  retry.user += "\n\n" + render(gw.templ("format_reminder"), {{"error", error}, {"schema", schema_text(schema_id)}}).user;
  auto second = gw.call(backend, retry);
  if (info) {
    info->digests.push_back(second.digest);
    info->reply = second.text;
  }
  return parse(second.text);
}

}  // namespace medcollab::gateway

namespace medcollab::gateway {

/// Reads a gateway config file; scripted backends may name a "script_file" relative to it.
Gateway load_gateway(const std::filesystem::path& path, ReplayStore& store);

}  // namespace medcollab::gateway
