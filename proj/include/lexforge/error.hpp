#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace lexforge {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public InvalidArgument {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : InvalidArgument("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class ZeroTotal : public Error {
 public:
  ZeroTotal() : Error("total is zero") {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::string field, const std::string& message = "")
      : Error(message.empty() ? "config error at " + field
                              : "config error at " + field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Transport or HTTP-level failure from an inference endpoint. status is the
// HTTP status code, or 0 when no response was received.
class EndpointError : public Error {
 public:
  EndpointError(int status, const std::string& what)
      : Error("endpoint error (" + std::to_string(status) + "): " + what), status_(status) {}

  int status() const noexcept { return status_; }
  bool transient() const noexcept { return status_ == 0 || status_ == 429 || status_ >= 500; }

 private:
  int status_;
};

class TimeoutError : public EndpointError {
 public:
  explicit TimeoutError(const std::string& what) : EndpointError(0, "timeout: " + what) {}
};

}  // namespace lexforge
