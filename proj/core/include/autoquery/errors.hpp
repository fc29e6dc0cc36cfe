#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace autoquery {

// Base for all library errors. `kind` is a stable machine-readable tag
// (e.g. "VersionMismatch", "InsufficientClassData") used by the CLI and
// service when emitting error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

}  // namespace autoquery
