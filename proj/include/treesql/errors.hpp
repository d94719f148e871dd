#pragma once

#include <stdexcept>
#include <string>

namespace treesql {

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A model response could not be turned into a structured artifact.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Endpoint unreachable or retry budget exhausted.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Endpoint answered, but not with the expected JSON shape.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Benchmark file is malformed; the message names the offending record.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration file is unreadable or names an unknown or invalid key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace treesql
