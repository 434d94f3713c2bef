#pragma once

#include <stdexcept>
#include <string>

namespace kppo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration, templates, or CLI arguments. Maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

class StructureError : public Error {
public:
    using Error::Error;
};

// An operation was applied to a node or value outside its domain.
class DomainError : public Error {
public:
    using Error::Error;
};

// Caller broke a precondition shared between two arguments (e.g. misaligned vectors).
class ContractError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

// Endpoint returned something we cannot interpret.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Attempts exhausted or a non-retryable status was returned.
class GatewayError : public Error {
public:
    GatewayError(const std::string& what, int status) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

// Raised by adapters for failures worth retrying (transport errors, 429, 5xx).
class TransientError : public Error {
public:
    TransientError(const std::string& what, int status) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}
    // Index into the instance list of the first instance that could not be scored.
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

} // namespace kppo
