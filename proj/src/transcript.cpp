#include "medcollab/transcript.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "medcollab/casefile.hpp"
#include "medcollab/error.hpp"
#include "medcollab/text.hpp"

namespace medcollab::transcript {

using nlohmann::json;

std::string format_utc_ms(long long millis) {
  std::time_t secs = static_cast<std::time_t>(millis / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis % 1000));
  return buf;
}

std::string WallClock::now() {
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now().time_since_epoch());
  return format_utc_ms(ms.count());
}

std::string LogicalClock::now() { return format_utc_ms(tick_++); }

std::string event_digest(const std::string& prev, size_t seq, const std::string& ts, const std::string& type,
                         const json& data) {
  json body{{"seq", seq}, {"ts", ts}, {"type", type}, {"data", data}};
  return text::sha256_hex(prev + "\n" + body.dump());
}

std::string serialize(const Event& e) {
  return json{{"seq", e.seq}, {"ts", e.ts}, {"type", e.type}, {"data", e.data}, {"prev", e.prev}, {"digest", e.digest}}
      .dump();
}

Writer::Writer(std::optional<std::filesystem::path> path, Clock& clock) : path_(std::move(path)), clock_(clock) {
  if (path_) {
    out_.open(*path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot open transcript " + path_->string());
  }
  last_.digest = kGenesis;
}

const Event& Writer::append(const std::string& type, json data) {
  Event e;
  e.seq = lines_.size();
  e.ts = clock_.now();
  e.type = type;
  e.data = std::move(data);
  e.prev = last_.digest;
  e.digest = event_digest(e.prev, e.seq, e.ts, e.type, e.data);
  lines_.push_back(serialize(e));
  if (path_) {
    out_ << lines_.back() << '\n';
    out_.flush();
    if (!out_) throw Error("failed writing transcript " + path_->string());
  }
  last_ = std::move(e);
  return last_;
}

std::string Writer::contents() const {
  std::string out;
  for (const auto& l : lines_) out += l + "\n";
  return out;
}

namespace {

std::vector<std::string> split_lines(const std::string& contents, bool& trailing_newline) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start < contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(contents.substr(start));
      trailing_newline = false;
      return lines;
    }
    lines.push_back(contents.substr(start, end - start));
    start = end + 1;
  }
  trailing_newline = true;
  return lines;
}

Event event_from_json(const json& j) {
  Event e;
  e.seq = j.at("seq").get<size_t>();
  e.ts = j.at("ts").get<std::string>();
  e.type = j.at("type").get<std::string>();
  e.data = j.at("data");
  e.prev = j.at("prev").get<std::string>();
  e.digest = j.at("digest").get<std::string>();
  return e;
}

}  // namespace

Verification verify(const std::string& contents) {
  Verification v;
  auto fail = [&](size_t index, std::string reason) {
    v.ok = false;
    v.failed_index = static_cast<long>(index);
    v.reason = std::move(reason);
    return v;
  };
  bool trailing = true;
  auto lines = split_lines(contents, trailing);
  if (lines.empty()) return fail(0, "empty transcript");
  std::string prev = kGenesis;
  for (size_t i = 0; i < lines.size(); ++i) {
    Event e;
    try {
      auto j = json::parse(lines[i]);
      e = event_from_json(j);
      if (serialize(e) != lines[i]) return fail(i, "event is not in canonical form");
    } catch (const json::exception& ex) {
      return fail(i, std::string("unparseable event: ") + ex.what());
    }
    if (e.seq != i) return fail(i, "sequence number " + std::to_string(e.seq) + " out of order");
    if (i == 0 && (e.type != "header" || e.data.value("schema", std::string()) != kSchema))
      return fail(0, "missing or unsupported schema header");
    if (e.prev != prev) return fail(i, "previous-digest link broken");
    if (event_digest(e.prev, e.seq, e.ts, e.type, e.data) != e.digest) return fail(i, "digest mismatch");
    prev = e.digest;
  }
  if (!trailing) return fail(lines.size() - 1, "final event is not newline-terminated");
  v.events = lines.size();
  return v;
}

Verification verify_file(const std::filesystem::path& path) { return verify(read_file(path)); }

std::vector<Event> parse(const std::string& contents) {
  bool trailing = true;
  std::vector<Event> events;
  size_t i = 0;
  for (const auto& line : split_lines(contents, trailing)) {
    try {
      events.push_back(event_from_json(json::parse(line)));
    } catch (const json::exception& ex) {
      throw ParseError(std::string("transcript: ") + ex.what(), static_cast<long>(i));
    }
    ++i;
  }
  return events;
}

}  // namespace medcollab::transcript
