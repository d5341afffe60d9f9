#pragma once

#include <stdexcept>
#include <string>

namespace turbstoch {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error("state error: " + msg) {}
};

struct ScaleError : std::runtime_error {
    explicit ScaleError(const std::string& msg) : std::runtime_error("scale error: " + msg) {}
};

struct DegenerateStatsError : std::runtime_error {
    explicit DegenerateStatsError(const std::string& msg)
        : std::runtime_error("degenerate statistics: " + msg) {}
};

struct FitError : std::runtime_error {
    explicit FitError(const std::string& msg) : std::runtime_error("fit error: " + msg) {}
};

struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error("range error: " + msg) {}
};

struct OptimizerError : std::runtime_error {
    explicit OptimizerError(const std::string& msg) : std::runtime_error("optimizer error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

}  // namespace turbstoch
