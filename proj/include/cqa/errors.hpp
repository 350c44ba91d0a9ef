#pragma once

#include <stdexcept>
#include <string>

namespace cqa {

// Base of every error raised by the library. `kind()` is the machine-readable
// tag emitted by the CLI in its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error("dimension_error", what) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error("domain_error", what) {}
};

struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& what) : Error("degenerate_input", what) {}
};

struct EmptyInputError : Error {
    explicit EmptyInputError(const std::string& what) : Error("empty_input", what) {}
};

struct UndefinedMetricError : Error {
    explicit UndefinedMetricError(const std::string& what) : Error("undefined_metric", what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

}  // namespace cqa
