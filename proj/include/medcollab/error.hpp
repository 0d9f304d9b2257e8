#pragma once

#include <stdexcept>
#include <string>

namespace medcollab {

/// Base for every failure the engine reports to callers.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or record. `index` is the record position when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, long index = -1)
      : Error(index >= 0 ? "record " + std::to_string(index) + ": " + what : what), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Structured reply missing or not matching its schema. `field` names the offending field.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error("schema violation on field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class NoStructuredBlock : public Error {
 public:
  NoStructuredBlock() : Error("no fenced JSON block found in reply") {}
};

/// Transport failure after the retry policy was exhausted.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int attempts, int status = 0, std::string body = {})
      : Error(what), attempts_(attempts), status_(status), body_(std::move(body)) {}
  int attempts() const { return attempts_; }
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int attempts_;
  int status_;
  std::string body_;
};

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(std::string digest)
      : Error("replay miss: no recorded reply for digest " + digest), digest_(std::move(digest)) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace medcollab
