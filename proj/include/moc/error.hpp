#pragma once

#include <utility>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace moc {

enum class ErrorCode {
  precondition,
  parse,
  protocol,
  transport,
  config,
  io,
  no_fixture,
  no_match,
  undefined_value,
  degenerate_graph,
  routing,
  extraction,
  invariant,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by network backends after the retry budget is spent.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int attempts)
      : Error(ErrorCode::transport, message + " (after " +
                                        std::to_string(attempts) +
                                        " attempts)"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

// A parse failure. `line` is 1-based and 0 when not tied to a line; `raw`
// keeps the offending input for auditing.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0,
             std::string raw = {})
      : Error(ErrorCode::parse,
              line ? "line " + std::to_string(line) + ": " + message
                   : message),
        line_(line),
        raw_(std::move(raw)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::size_t line_;
  std::string raw_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::precondition, message);
}

}  // namespace moc
