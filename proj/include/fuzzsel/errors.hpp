// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fuzzsel {

// Error classes map onto the CLI exit-code contract:
//   config/capability -> 2, transport exhaustion -> 3, everything else -> 1.
enum class ErrorKind {
    internal,   // bug or unexpected state
    config,     // bad configuration or invalid user input
    capability, // backend cannot serve the requested operation
    transport,  // remote endpoint failed after retries
    data,       // malformed or inconsistent data files
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};
struct CapabilityError : Error {
    explicit CapabilityError(const std::string& msg) : Error(ErrorKind::capability, msg) {}
};
struct TransportError : Error {
    explicit TransportError(const std::string& msg) : Error(ErrorKind::transport, msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

} // namespace fuzzsel
