#include "moc/error.hpp"

namespace moc {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::parse: return "parse";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::transport: return "transport";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
    case ErrorCode::no_fixture: return "no_fixture";
    case ErrorCode::no_match: return "no_match";
    case ErrorCode::undefined_value: return "undefined_value";
    case ErrorCode::degenerate_graph: return "degenerate_graph";
    case ErrorCode::routing: return "routing";
    case ErrorCode::extraction: return "extraction";
    case ErrorCode::invariant: return "invariant";
  }
  return "unknown";
}

}  // namespace moc
