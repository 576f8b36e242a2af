#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chiq {

enum class ErrorKind {
    io,
    parse,
    schema,
    validation,
    duplicate,
    transport,
    protocol,
    config,
    mismatch,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::parse: return "parse";
        case ErrorKind::schema: return "schema";
        case ErrorKind::validation: return "validation";
        case ErrorKind::duplicate: return "duplicate";
        case ErrorKind::transport: return "transport";
        case ErrorKind::protocol: return "protocol";
        case ErrorKind::config: return "config";
        case ErrorKind::mismatch: return "mismatch";
    }
    return "unknown";
}

/// Base exception for every failure surfaced by the library. The kind is
/// stable and is what the CLI prints in its one-line error report.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace chiq
