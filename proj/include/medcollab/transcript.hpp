#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace medcollab::transcript {

inline constexpr const char* kSchema = "medcollab.transcript/1";
inline const std::string kGenesis(64, '0');

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::string now() = 0;
};

/// UTC RFC 3339 with milliseconds.
class WallClock : public Clock {
 public:
  std::string now() override;
};

/// Deterministic ticks: the n-th call returns epoch + n milliseconds.
class LogicalClock : public Clock {
 public:
  std::string now() override;

 private:
  long tick_ = 0;
};

std::string format_utc_ms(long long millis_since_epoch);

struct Event {
  size_t seq = 0;
  std::string ts;
  std::string type;
  nlohmann::json data;
  std::string prev;
  std::string digest;
};

/// Digest of an event body chained onto the previous event's digest.
std::string event_digest(const std::string& prev, size_t seq, const std::string& ts, const std::string& type,
                         const nlohmann::json& data);

/// Canonical one-line serialization of an event.
std::string serialize(const Event& e);

/// Append-only writer. Each append is written and flushed before returning.
class Writer {
 public:
  /// `path` may be empty for an in-memory transcript.
  Writer(std::optional<std::filesystem::path> path, Clock& clock);

  const Event& append(const std::string& type, nlohmann::json data);
  const std::vector<std::string>& lines() const { return lines_; }
  std::string contents() const;

 private:
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  Clock& clock_;
  std::vector<std::string> lines_;
  Event last_;
};

struct Verification {
  bool ok = true;
  size_t events = 0;
  long failed_index = -1;
  std::string reason;
};

Verification verify(const std::string& contents);
Verification verify_file(const std::filesystem::path& path);

/// Parses every line without checking the chain.
std::vector<Event> parse(const std::string& contents);

}  // namespace medcollab::transcript
